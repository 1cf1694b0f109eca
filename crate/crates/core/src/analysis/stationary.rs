//! Long-run averages along paths: stationary balance residuals, occupancy
//! of regions, the root-exponential moment and the closed-form means of the
//! linear relaxation model.

use serde::{Deserialize, Serialize};

use super::generator::{generator_unchecked, TestFunction};
use crate::error::{contract, Result};
use crate::flow;
use crate::model::{Edge, NetworkModel};
use crate::region::Region;
use crate::rng;
use crate::sim::{self, Observer, Trajectory};
use crate::stability::{self, Verdict};
use crate::stats::{self, Estimate};

/// Fraction of each path discarded before averaging.
pub const BURN_IN: f64 = 0.2;
/// Alternative burn-in fractions reported for sensitivity.
pub const BURN_IN_SENSITIVITY: [f64; 2] = [0.1, 0.4];
/// Batches per path for batch-means intervals.
pub const BATCHES: usize = 20;
/// Time bins per path; every burn-in above leaves a multiple of `BATCHES`.
const BINS: usize = 200;
/// Longest stretch integrated by one Gauss-Legendre rule.
const MAX_PIECE: f64 = 1.0;

const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

type PathFn<'a> = Box<dyn Fn(&[f64]) -> f64 + Send + Sync + 'a>;

enum Integrand<'a> {
    /// Integrated with Gauss-Legendre between drains.
    Smooth(PathFn<'a>),
    /// Exact time inside.
    Inside(Region),
    /// Log-space integral of `exp(g(x))`.
    LogExp(PathFn<'a>),
}

/// Accumulates time integrals per bin over `[t0, t_end]`.
struct Averager<'a> {
    model: &'a NetworkModel,
    t0: f64,
    width: f64,
    bin: usize,
    integrands: Vec<Integrand<'a>>,
    /// `acc[k][b]`: integral of integrand `k` over bin `b` (log for `LogExp`).
    acc: Vec<Vec<f64>>,
}

impl<'a> Averager<'a> {
    fn new(model: &'a NetworkModel, t0: f64, t_end: f64, integrands: Vec<Integrand<'a>>) -> Self {
        let acc = integrands
            .iter()
            .map(|k| match k {
                Integrand::LogExp(_) => vec![f64::NEG_INFINITY; BINS],
                _ => vec![0.0; BINS],
            })
            .collect();
        Averager { model, t0, width: (t_end - t0) / BINS as f64, bin: 0, integrands, acc }
    }

    fn boundary(&self, b: usize) -> f64 {
        self.t0 + self.width * b as f64
    }

    fn piece(&mut self, y: &[f64], len: f64) {
        let b = self.bin;
        let mut cuts = vec![0.0, len];
        let mut smooth_cuts_ready = false;
        for k in 0..self.integrands.len() {
            match &self.integrands[k] {
                Integrand::Inside(region) => {
                    self.acc[k][b] += region.segment_profile(self.model, y, len).time_inside;
                }
                Integrand::Smooth(_) | Integrand::LogExp(_) => {
                    if !smooth_cuts_ready {
                        cuts = smooth_cuts(self.model, y, len);
                        smooth_cuts_ready = true;
                    }
                }
            }
        }
        if !smooth_cuts_ready {
            return;
        }
        let mut node_state = y.to_vec();
        for w in cuts.windows(2) {
            let (a, e) = (w[0], w[1]);
            let half = 0.5 * (e - a);
            if half <= 0.0 {
                continue;
            }
            let mid = 0.5 * (a + e);
            for (&node, &weight) in GL_NODES.iter().zip(&GL_WEIGHTS) {
                node_state.copy_from_slice(y);
                flow::flow_in_place(self.model, &mut node_state, mid + half * node, None);
                let wt = weight * half;
                for (k, integrand) in self.integrands.iter().enumerate() {
                    match integrand {
                        Integrand::Smooth(f) => self.acc[k][b] += wt * f(&node_state),
                        Integrand::LogExp(g) => {
                            self.acc[k][b] = log_add(self.acc[k][b], wt.ln() + g(&node_state));
                        }
                        Integrand::Inside(_) => {}
                    }
                }
            }
        }
    }

    /// Per-bin values of integrand `k` as plain integrals, scaled by
    /// `exp(-shift)` for log-space integrands.
    fn bins(&self, k: usize, shift: f64) -> Vec<f64> {
        match self.integrands[k] {
            Integrand::LogExp(_) => self.acc[k].iter().map(|l| (l - shift).exp()).collect(),
            _ => self.acc[k].clone(),
        }
    }
}

impl Observer for Averager<'_> {
    fn segment(&mut self, t: f64, x: &[f64], dt: f64) {
        let end = t + dt;
        let mut s = t;
        let mut y = x.to_vec();
        while s < end {
            while self.bin + 1 < BINS && self.boundary(self.bin + 1) <= s {
                self.bin += 1;
            }
            let stop = if self.bin + 1 < BINS { self.boundary(self.bin + 1).min(end) } else { end };
            let len = stop - s;
            self.piece(&y, len);
            if stop < end {
                flow::flow_in_place(self.model, &mut y, len, None);
            }
            s = stop;
        }
    }
}

/// Split points in `[0, len]`: drain times and a maximum piece length.
fn smooth_cuts(model: &NetworkModel, y: &[f64], len: f64) -> Vec<f64> {
    let mut cuts = vec![0.0, len];
    for (i, &yi) in y.iter().enumerate() {
        if yi > 0.0 {
            let t = flow::coordinate_drain_time(model.growth(i), yi);
            if t > 0.0 && t < len {
                cuts.push(t);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    let mut out = vec![0.0];
    for w in cuts.windows(2) {
        let pieces = ((w[1] - w[0]) / MAX_PIECE).ceil().max(1.0) as usize;
        for p in 1..=pieces {
            out.push(w[0] + (w[1] - w[0]) * p as f64 / pieces as f64);
        }
    }
    out
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Batch means of a per-bin integral after discarding `burn_in`.
fn batch_means(bins: &[f64], width: f64, burn_in: f64) -> Vec<f64> {
    let start = (burn_in * BINS as f64).round() as usize;
    let per = (BINS - start) / BATCHES;
    (0..BATCHES)
        .map(|k| {
            let lo = start + k * per;
            bins[lo..lo + per].iter().sum::<f64>() / (per as f64 * width)
        })
        .collect()
}

/// Pooled estimate over several paths' batch means.
fn pooled(averagers: &[Averager<'_>], k: usize, burn_in: f64) -> Estimate {
    let all: Vec<f64> =
        averagers.iter().flat_map(|a| batch_means(&a.bins(k, 0.0), a.width, burn_in)).collect();
    stats::batch_means_ci(&all)
}

fn walk_all<'a>(
    model: &'a NetworkModel,
    trajs: &[Trajectory],
    make: impl Fn() -> Vec<Integrand<'a>>,
) -> Result<Vec<Averager<'a>>> {
    if trajs.is_empty() {
        return Err(contract("at least one trajectory is required"));
    }
    let mut out = Vec::with_capacity(trajs.len());
    for tr in trajs {
        check_trajectory(model, tr)?;
        let mut av = Averager::new(model, tr.x0.t, tr.t_end, make());
        tr.walk(model, &mut av);
        out.push(av);
    }
    Ok(out)
}

fn check_trajectory(model: &NetworkModel, tr: &Trajectory) -> Result<()> {
    model.check_state(&tr.x0.x)?;
    if !(tr.t_end > tr.x0.t) {
        return Err(contract("trajectory has an empty time span"));
    }
    Ok(())
}

/// Averages under one burn-in choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurnInVariant {
    pub burn_in: f64,
    pub patch_residuals: Vec<Estimate>,
    pub function_residuals: Vec<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryReport {
    pub model: String,
    pub classification: Verdict,
    pub warning: Option<String>,
    pub paths: usize,
    /// Averaged time per path after burn-in.
    pub span: f64,
    /// Number of batch means pooled per estimate.
    pub samples: usize,
    pub patch_means: Vec<Estimate>,
    pub edge_debits: Vec<(Edge, Estimate)>,
    /// Time average of `A x_i`: growth plus inflow minus outflow debits.
    pub patch_residuals: Vec<Estimate>,
    /// Time average of `A f` for each supplied test function.
    pub function_residuals: Vec<(String, Estimate)>,
    pub burn_in: f64,
    pub sensitivity: Vec<BurnInVariant>,
}

impl StationaryReport {
    /// True when every residual interval at the main burn-in, widened by
    /// `k`, covers zero.
    pub fn residuals_vanish(&self, k: f64) -> bool {
        self.patch_residuals.iter().chain(self.function_residuals.iter().map(|(_, e)| e)).all(|e| e.covers(0.0, k))
    }
}

/// Stationary balance residuals from long paths.
///
/// For each patch the time average of `phi^i + sum_j (d_{j,i} - d_{i,j})`
/// should vanish, and so should the time average of `A f` for each test
/// function. Paths are cut after the burn-in into batches; batch means from
/// all paths are pooled.
pub fn stationary_residuals(
    model: &NetworkModel,
    trajs: &[Trajectory],
    funcs: &[TestFunction],
) -> Result<StationaryReport> {
    let n = model.n();
    let edges: Vec<Edge> = model.transfer_edges().to_vec();
    let averagers = walk_all(model, trajs, || {
        let mut v: Vec<Integrand<'_>> = Vec::new();
        for i in 0..n {
            v.push(Integrand::Smooth(Box::new(move |x: &[f64]| x[i])));
        }
        for &e in &edges {
            v.push(Integrand::Smooth(Box::new(move |x: &[f64]| model.debit(e, x))));
        }
        for i in 0..n {
            let f = TestFunction::Coordinate(i);
            v.push(Integrand::Smooth(Box::new(move |x: &[f64]| generator_unchecked(model, &f, x))));
        }
        for f in funcs {
            let f = f.clone();
            v.push(Integrand::Smooth(Box::new(move |x: &[f64]| generator_unchecked(model, &f, x))));
        }
        v
    })?;
    let residuals_at = |burn: f64| {
        let patch: Vec<Estimate> = (0..n).map(|i| pooled(&averagers, n + edges.len() + i, burn)).collect();
        let func: Vec<Estimate> =
            (0..funcs.len()).map(|k| pooled(&averagers, 2 * n + edges.len() + k, burn)).collect();
        (patch, func)
    };
    let (patch_residuals, function_estimates) = residuals_at(BURN_IN);
    let sensitivity = BURN_IN_SENSITIVITY
        .iter()
        .map(|&b| {
            let (p, f) = residuals_at(b);
            BurnInVariant { burn_in: b, patch_residuals: p, function_residuals: f }
        })
        .collect();
    let classification = stability::classify(model).classification;
    let warning = (classification != Verdict::Ergodic)
        .then(|| format!("model is classified {classification}; stationary averages may not exist"));
    let span = stats::mean(&trajs.iter().map(|t| (t.t_end - t.x0.t) * (1.0 - BURN_IN)).collect::<Vec<_>>());
    Ok(StationaryReport {
        model: model.name().to_string(),
        classification,
        warning,
        paths: trajs.len(),
        span,
        samples: trajs.len() * BATCHES,
        patch_means: (0..n).map(|i| pooled(&averagers, i, BURN_IN)).collect(),
        edge_debits: edges.iter().enumerate().map(|(k, &e)| (e, pooled(&averagers, n + k, BURN_IN))).collect(),
        patch_residuals,
        function_residuals: funcs.iter().map(|f| f.name()).zip(function_estimates).collect(),
        burn_in: BURN_IN,
        sensitivity,
    })
}

/// Exact fraction of `[t0, t_end]` the path spends in `region`.
pub fn occupancy(model: &NetworkModel, traj: &Trajectory, region: &Region) -> Result<f64> {
    check_trajectory(model, traj)?;
    check_region(model, region)?;
    struct Inside<'a> {
        model: &'a NetworkModel,
        region: &'a Region,
        time: f64,
    }
    impl Observer for Inside<'_> {
        fn segment(&mut self, _t: f64, x: &[f64], dt: f64) {
            self.time += self.region.segment_profile(self.model, x, dt).time_inside;
        }
    }
    let mut obs = Inside { model, region, time: 0.0 };
    traj.walk(model, &mut obs);
    Ok((obs.time / (traj.t_end - traj.x0.t)).clamp(0.0, 1.0))
}

fn check_region(model: &NetworkModel, region: &Region) -> Result<()> {
    match region.max_patch() {
        Some(p) if p >= model.n() => Err(contract(format!("region refers to missing patch {}", p + 1))),
        _ => Ok(()),
    }
}

/// Time occupancy of `region` along one simulated path of length `t_end`,
/// after burn-in, with a batch-means interval. The path is not stored.
pub fn occupancy_estimate(
    model: &NetworkModel,
    x0: &[f64],
    t_end: f64,
    seed: u64,
    region: &Region,
) -> Result<Estimate> {
    check_region(model, region)?;
    if !(t_end > 0.0) {
        return Err(contract("t_end must be positive"));
    }
    let mut av = Averager::new(model, 0.0, t_end, vec![Integrand::Inside(region.clone())]);
    let mut rng = rng::stream(seed, 0);
    sim::run(model, x0, t_end, &mut rng, &mut av)?;
    Ok(pooled(std::slice::from_ref(&av), 0, BURN_IN))
}

/// Fraction of independent replicas whose state at `t_end` lies in
/// `region`, with a 95% Wilson interval `(lo, hi)`.
pub fn endpoint_fraction(
    model: &NetworkModel,
    x0: &[f64],
    t_end: f64,
    replicas: usize,
    seed: u64,
    region: &Region,
) -> Result<(f64, (f64, f64))> {
    check_region(model, region)?;
    if replicas == 0 {
        return Err(contract("replicas must be positive"));
    }
    let hits = rng::replicas(seed, replicas, |_, rng| {
        sim::run(model, x0, t_end, rng, &mut ()).map(|s| region.contains(&s.x_end))
    });
    let mut count = 0;
    for h in hits {
        count += h? as usize;
    }
    Ok((count as f64 / replicas as f64, stats::wilson(count, replicas, 0.95)))
}

/// Time average of `exp(eta * sqrt(total))` after burn-in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FMoment {
    /// Natural log of the full-window average.
    pub log_value: f64,
    /// Full-window average with a batch-means interval.
    pub value: Estimate,
    /// Average over the first half of the window.
    pub half_window: Estimate,
}

/// Root-exponential moment of the total along a path. Integrals are kept
/// in log space so large totals do not overflow before averaging.
pub fn f_moment(model: &NetworkModel, traj: &Trajectory, eta: f64) -> Result<FMoment> {
    if !(eta > 0.0) {
        return Err(contract("eta must be positive"));
    }
    let avs = walk_all(model, std::slice::from_ref(traj), || {
        vec![Integrand::LogExp(Box::new(move |x: &[f64]| eta * x.iter().sum::<f64>().max(0.0).sqrt()))]
    })?;
    let av = &avs[0];
    let start = (BURN_IN * BINS as f64).round() as usize;
    let logs = &av.acc[0][start..];
    let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bins = av.bins(0, shift);
    let span = av.width * (BINS - start) as f64;
    let total: f64 = bins[start..].iter().sum();
    let log_value = shift + (total / span).ln();
    let scale = shift.exp();
    let scaled = |e: Estimate| Estimate { value: e.value * scale, half_width: e.half_width * scale };
    let value = scaled(stats::batch_means_ci(&batch_means(&bins, av.width, BURN_IN)));
    let half = (BINS - start) / 2;
    let half_bins: Vec<f64> = bins[start..start + half].to_vec();
    let per = half / 10;
    let half_means: Vec<f64> =
        (0..10).map(|k| half_bins[k * per..(k + 1) * per].iter().sum::<f64>() / (per as f64 * av.width)).collect();
    let half_window = scaled(stats::batch_means_ci(&half_means));
    Ok(FMoment { log_value, value, half_window })
}

/// Correlation under the time-average law between `1{x_patch > 0}` and the
/// total, estimated per batch and averaged. Returns zero with a zero width
/// when either quantity is constant along the whole window.
pub fn indicator_total_correlation(model: &NetworkModel, traj: &Trajectory, patch: usize) -> Result<Estimate> {
    if patch >= model.n() {
        return Err(contract(format!("missing patch {}", patch + 1)));
    }
    let avs = walk_all(model, std::slice::from_ref(traj), || {
        let ind = move |x: &[f64]| if x[patch] > 0.0 { 1.0 } else { 0.0 };
        let tot = |x: &[f64]| x.iter().sum::<f64>();
        vec![
            Integrand::Smooth(Box::new(ind)),
            Integrand::Smooth(Box::new(tot)),
            Integrand::Smooth(Box::new(move |x: &[f64]| tot(x) * tot(x))),
            Integrand::Smooth(Box::new(move |x: &[f64]| ind(x) * tot(x))),
        ]
    })?;
    let av = &avs[0];
    let series: Vec<Vec<f64>> = (0..4).map(|k| batch_means(&av.bins(k, 0.0), av.width, BURN_IN)).collect();
    let mut corr = Vec::with_capacity(BATCHES);
    for b in 0..BATCHES {
        let (p, s, s2, ps) = (series[0][b], series[1][b], series[2][b], series[3][b]);
        let var_p = p * (1.0 - p);
        let var_s = s2 - s * s;
        if var_p > 1e-12 && var_s > 1e-12 * s2.max(1.0) {
            corr.push((ps - p * s) / (var_p * var_s).sqrt());
        }
    }
    if corr.len() < 2 {
        return Ok(Estimate { value: 0.0, half_width: 0.0 });
    }
    Ok(stats::mean_ci(&corr))
}

/// Stationary means of the linear relaxation model: growth `a_i - x_i`, unit
/// rates between every ordered pair, transfers from `i` with mean
/// `m_i x_i`. Solves `(1 + m_i (n - 1)) E_i - sum_{j != i} m_j E_j = a_i`;
/// the matrix is strictly diagonally dominant by columns.
pub fn relaxation_stationary_means(a: &[f64], m: &[f64]) -> Result<Vec<f64>> {
    let n = a.len();
    if n == 0 || m.len() != n {
        return Err(contract("a and m must be nonempty and of equal length"));
    }
    if a.iter().chain(m).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(contract("a and m must be finite and nonnegative"));
    }
    let mut mat: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| if i == j { 1.0 + m[i] * (n - 1) as f64 } else { -m[j] }).collect();
            row.push(a[i]);
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| mat[r][col].abs().total_cmp(&mat[s][col].abs())).unwrap_or(col);
        mat.swap(col, pivot);
        for r in col + 1..n {
            let f = mat[r][col] / mat[col][col];
            if f != 0.0 {
                for c in col..=n {
                    mat[r][c] -= f * mat[col][c];
                }
            }
        }
    }
    let mut e = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| mat[i][j] * e[j]).sum();
        e[i] = (mat[i][n] - s) / mat[i][i];
    }
    Ok(e)
}

/// Largest absolute residual of the relaxation-model linear system.
pub fn relaxation_residual(a: &[f64], m: &[f64], e: &[f64]) -> f64 {
    let n = a.len();
    (0..n)
        .map(|i| {
            let lhs = (1.0 + m[i] * (n - 1) as f64) * e[i] - (0..n).filter(|&j| j != i).map(|j| m[j] * e[j]).sum::<f64>();
            (lhs - a[i]).abs()
        })
        .fold(0.0, f64::max)
}
