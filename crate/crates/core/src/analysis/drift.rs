//! The dominating random walk of total-population excursions and its
//! exponential martingale.
//!
//! Increments are `-c T'` with probability `eps`, otherwise `G * T M` with
//! `G` geometric on `{1, 2, ...}` with success probability `delta`.

use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::rng::{self, Rng};
use crate::stats::{self, Estimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftWalkParams {
    /// Probability of a decrement.
    pub epsilon: f64,
    /// Success probability of the geometric factor.
    pub delta: f64,
    /// Size of a decrement, `c T'`.
    pub c_t_prime: f64,
    /// Unit of an increment, `T M`.
    pub t_m: f64,
}

impl DriftWalkParams {
    pub fn check(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.epsilon)
            && self.delta > 0.0
            && self.delta <= 1.0
            && self.c_t_prime > 0.0
            && self.t_m > 0.0
            && self.c_t_prime.is_finite()
            && self.t_m.is_finite();
        if ok {
            Ok(())
        } else {
            Err(contract("need 0 <= epsilon <= 1, 0 < delta <= 1 and positive finite c T' and T M"))
        }
    }

    /// `-eps c T' + (1 - eps) T M / delta`.
    pub fn mean_increment(&self) -> f64 {
        -self.epsilon * self.c_t_prime + (1.0 - self.epsilon) * self.t_m / self.delta
    }

    /// Upper end of the rate domain, `ln(1 / (1 - delta)) / (T M)`.
    pub fn rate_bound(&self) -> f64 {
        -(1.0 - self.delta).ln() / self.t_m
    }

    fn increment(&self, rng: &mut Rng, geometric: Option<&Geometric>) -> f64 {
        if rng::open_unit(rng) < self.epsilon {
            -self.c_t_prime
        } else {
            let g = geometric.map_or(1, |g| 1 + g.sample(rng));
            g as f64 * self.t_m
        }
    }

    fn geometric(&self) -> Option<Geometric> {
        (self.delta < 1.0).then(|| Geometric::new(self.delta).expect("delta in (0, 1)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GammaRate {
    /// `gamma(r) = -ln E[exp(r * increment)]`, with a warning when it is not
    /// positive.
    Value { gamma: f64, warning: Option<String> },
    OutOfDomain { bound: f64 },
}

impl GammaRate {
    pub fn value(&self) -> Option<f64> {
        match self {
            GammaRate::Value { gamma, .. } => Some(*gamma),
            GammaRate::OutOfDomain { .. } => None,
        }
    }
}

/// `gamma(r) = -ln(delta (1 - eps) / (exp(-r T M) - (1 - delta)) + eps exp(-r c T'))`
/// for `0 <= r < ln(1 / (1 - delta)) / (T M)`.
pub fn gamma_rate(r: f64, p: &DriftWalkParams) -> Result<GammaRate> {
    p.check()?;
    if !(r >= 0.0) {
        return Err(contract("r must be nonnegative"));
    }
    let bound = p.rate_bound();
    if r >= bound {
        return Ok(GammaRate::OutOfDomain { bound });
    }
    let up = p.delta * (1.0 - p.epsilon) / ((-r * p.t_m).exp() - (1.0 - p.delta));
    let gamma = -(up + p.epsilon * (-r * p.c_t_prime).exp()).ln();
    let warning = (gamma <= 0.0).then(|| {
        format!("gamma({r}) = {gamma} is not positive; mean increment is {}", p.mean_increment())
    });
    Ok(GammaRate::Value { gamma, warning })
}

/// One walk `Y_1 = y0, ..., Y_{steps}` on stream `(seed, 0)`.
pub fn drift_walk(p: &DriftWalkParams, y0: f64, steps: usize, seed: u64) -> Result<Vec<f64>> {
    p.check()?;
    let mut rng = rng::stream(seed, 0);
    Ok(walk(p, y0, steps, &mut rng))
}

fn walk(p: &DriftWalkParams, y0: f64, steps: usize, rng: &mut Rng) -> Vec<f64> {
    let geo = p.geometric();
    let mut y = Vec::with_capacity(steps);
    if steps == 0 {
        return y;
    }
    y.push(y0);
    for _ in 1..steps {
        let last = *y.last().expect("nonempty");
        y.push(last + p.increment(rng, geo.as_ref()));
    }
    y
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub r: f64,
    pub gamma: f64,
    /// `exp(r Y_1)`, the common mean.
    pub target: f64,
    /// Per-step means of `exp(r Y_k + gamma (k - 1))`, `k = 1..steps`.
    pub means: Vec<Estimate>,
    /// Least-squares slope of the means over `k`.
    pub slope: f64,
    pub slope_se: f64,
    pub slope_z: f64,
    pub mean_increment: Estimate,
    pub mean_increment_theory: f64,
}

impl MartingaleReport {
    pub fn is_flat(&self, z: f64) -> bool {
        self.slope_z < z
    }
}

/// Checks that `exp(r Y_k + gamma(r) (k - 1))` has constant mean in `k`.
///
/// The slope is the least-squares slope of the per-step means; since it is
/// linear in the per-replica values, its standard error comes from the
/// spread of per-replica slopes.
pub fn martingale_check(
    p: &DriftWalkParams,
    r: f64,
    y0: f64,
    replicas: usize,
    steps: usize,
    seed: u64,
) -> Result<MartingaleReport> {
    let gamma = match gamma_rate(r, p)? {
        GammaRate::Value { gamma, .. } if gamma > 0.0 => gamma,
        GammaRate::Value { gamma, .. } => {
            return Err(contract(format!("gamma({r}) = {gamma} must be positive for the martingale check")))
        }
        GammaRate::OutOfDomain { bound } => {
            return Err(contract(format!("r = {r} is outside the domain r < {bound}")))
        }
    };
    if replicas < 2 || steps < 2 {
        return Err(contract("need at least two replicas and two steps"));
    }
    let ks: Vec<f64> = (1..=steps).map(|k| k as f64).collect();
    let kbar = stats::mean(&ks);
    let sxx: f64 = ks.iter().map(|k| (k - kbar) * (k - kbar)).sum();
    let rows: Vec<(Vec<f64>, f64, f64)> = rng::replicas(seed, replicas, |_, rng| {
        let y = walk(p, y0, steps, rng);
        let vals: Vec<f64> = y.iter().enumerate().map(|(k, yk)| (r * yk + gamma * k as f64).exp()).collect();
        let slope: f64 = vals.iter().zip(&ks).map(|(v, k)| (k - kbar) / sxx * v).sum();
        (vals, slope, (y[steps - 1] - y[0]) / (steps - 1) as f64)
    });
    let means = (0..steps)
        .map(|k| stats::mean_ci(&rows.iter().map(|row| row.0[k]).collect::<Vec<_>>()))
        .collect();
    let slopes: Vec<f64> = rows.iter().map(|row| row.1).collect();
    let slope = stats::mean(&slopes);
    let slope_se = stats::std_error(&slopes);
    let target = (r * y0).exp();
    let slope_z = if slope_se > 0.0 {
        slope.abs() / slope_se
    } else if slope.abs() <= 1e-12 * target {
        0.0
    } else {
        f64::INFINITY
    };
    let incs: Vec<f64> = rows.iter().map(|row| row.2).collect();
    Ok(MartingaleReport {
        r,
        gamma,
        target,
        means,
        slope,
        slope_se,
        slope_z,
        mean_increment: stats::mean_ci(&incs),
        mean_increment_theory: p.mean_increment(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingReport {
    pub gamma: f64,
    /// Mean of `exp(gamma (sigma - 1))` over replicas.
    pub shifted_moment: Estimate,
    /// Optional-stopping bound `exp(r (y0 - R + c T'))` on the shifted moment.
    pub shifted_bound: f64,
    /// Mean of `exp(gamma sigma)`.
    pub moment: Estimate,
    /// `exp(r (y0 - R - c T'))`, the bound in its commonly displayed form.
    pub displayed_bound: f64,
    /// Replicas that did not hit within the step cap.
    pub censored: usize,
    /// Shifted moment's lower interval end lies below the shifted bound.
    pub holds: bool,
    pub displayed_holds: bool,
}

/// Exponential moment of the hitting time of `(-inf, R]` against its
/// optional-stopping bounds. The walk starts at `y0 > R`, so `sigma >= 2`.
/// Since decrements are exactly `c T'`, `Y_sigma > R - c T'`, which gives
/// `E exp(gamma (sigma - 1)) <= exp(r (y0 - R + c T'))`.
pub fn hitting_check(
    p: &DriftWalkParams,
    r: f64,
    y0: f64,
    level: f64,
    replicas: usize,
    max_steps: usize,
    seed: u64,
) -> Result<HittingReport> {
    let gamma = gamma_rate(r, p)?
        .value()
        .filter(|g| *g > 0.0)
        .ok_or_else(|| contract("gamma(r) must be in domain and positive"))?;
    if !(y0 > level) || replicas < 2 {
        return Err(contract("need y0 above the level and at least two replicas"));
    }
    let geo = p.geometric();
    let sigmas: Vec<Option<usize>> = rng::replicas(seed, replicas, |_, rng| {
        let mut y = y0;
        for k in 2..=max_steps {
            y += p.increment(rng, geo.as_ref());
            if y <= level {
                return Some(k);
            }
        }
        None
    });
    let hit: Vec<f64> = sigmas.iter().flatten().map(|&s| s as f64).collect();
    let censored = replicas - hit.len();
    let shifted: Vec<f64> = hit.iter().map(|s| (gamma * (s - 1.0)).exp()).collect();
    let full: Vec<f64> = hit.iter().map(|s| (gamma * s).exp()).collect();
    let shifted_moment = stats::mean_ci(&shifted);
    let moment = stats::mean_ci(&full);
    let shifted_bound = (r * (y0 - level + p.c_t_prime)).exp();
    let displayed_bound = (r * (y0 - level - p.c_t_prime)).exp();
    Ok(HittingReport {
        gamma,
        holds: censored == 0 && shifted_moment.lo() <= shifted_bound,
        displayed_holds: censored == 0 && moment.lo() <= displayed_bound,
        shifted_moment,
        shifted_bound,
        moment,
        displayed_bound,
        censored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SET: DriftWalkParams = DriftWalkParams { epsilon: 0.9, delta: 0.5, c_t_prime: 2.0, t_m: 0.1 };

    #[test]
    fn gamma_reference_values() {
        let g = gamma_rate(1.0, &SET).unwrap().value().unwrap();
        assert!((g - 1.405_240_205).abs() < 1e-8, "{g}");
        assert_eq!(gamma_rate(0.0, &SET).unwrap().value().unwrap(), 0.0);
        let p = DriftWalkParams { epsilon: 0.5, delta: 0.5, c_t_prime: 1.0, t_m: 1.0 };
        match gamma_rate(0.1, &p).unwrap() {
            GammaRate::Value { gamma, warning } => {
                assert!((gamma + 0.0676).abs() < 1e-4, "{gamma}");
                assert!(warning.is_some());
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(gamma_rate(7.0, &SET).unwrap(), GammaRate::OutOfDomain { .. }));
    }

    #[test]
    fn gamma_slope_at_zero_is_minus_mean_increment() {
        for p in [SET, DriftWalkParams { epsilon: 0.2, delta: 0.3, c_t_prime: 1.0, t_m: 0.5 }] {
            let h = 1e-6;
            let d = gamma_rate(h, &p).unwrap().value().unwrap() / h;
            assert!((d + p.mean_increment()).abs() < 1e-4, "{d} vs {}", p.mean_increment());
        }
    }

    #[test]
    fn degenerate_walk_is_exactly_flat() {
        let p = DriftWalkParams { epsilon: 1.0, ..SET };
        let g = gamma_rate(0.5, &p).unwrap().value().unwrap();
        assert!((g - 0.5 * 2.0).abs() < 1e-15);
        let rep = martingale_check(&p, 0.5, 3.0, 100, 20, 1).unwrap();
        assert!(rep.slope_z < 1.0, "{rep:?}");
        for m in &rep.means {
            assert!((m.value - rep.target).abs() < 1e-9 * rep.target);
        }
    }

    #[test]
    fn walk_is_reproducible_and_mean_matches() {
        assert_eq!(drift_walk(&SET, 0.0, 50, 4).unwrap(), drift_walk(&SET, 0.0, 50, 4).unwrap());
        let rep = martingale_check(&SET, 0.1, 0.0, 20_000, 10, 2).unwrap();
        assert!(rep.mean_increment.covers(SET.mean_increment(), 4.0), "{:?}", rep.mean_increment);
        assert!(rep.is_flat(3.0), "{}", rep.slope_z);
    }

    #[test]
    fn hitting_moment_respects_bound() {
        let rep = hitting_check(&SET, 1.0, 10.0, 0.0, 20_000, 10_000, 3).unwrap();
        assert_eq!(rep.censored, 0);
        assert!(rep.holds, "{rep:?}");
    }
}
