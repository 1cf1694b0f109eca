//! Diagnostics for growing models: the growth rate of the total and the
//! distance between normalised paths and the scaled process.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::flow;
use crate::model::NetworkModel;
use crate::rng;
use crate::sim::{self, Observer};
use crate::stats::{self, Estimate};

/// Captures the state at fixed times by flowing from the enclosing piece.
struct Snapshots<'a> {
    model: &'a NetworkModel,
    times: &'a [f64],
    next: usize,
    states: Vec<Vec<f64>>,
}

impl Observer for Snapshots<'_> {
    fn segment(&mut self, t: f64, x: &[f64], dt: f64) {
        while self.next < self.times.len() && self.times[self.next] <= t + dt {
            let mut y = x.to_vec();
            flow::flow_in_place(self.model, &mut y, (self.times[self.next] - t).max(0.0), None);
            self.states.push(y);
            self.next += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthSlope {
    /// Mean over replicas of the least-squares slope of the total over
    /// the second half of `[0, t_end]`.
    pub slope: Estimate,
    /// `sum_i c_i` for constant growth.
    pub expected: Option<f64>,
}

impl GrowthSlope {
    /// True when the slope is within `rel` of the expected value.
    pub fn within(&self, rel: f64) -> bool {
        self.expected.is_some_and(|c| (self.slope.value - c).abs() <= rel * c.abs())
    }
}

/// Growth rate of the total population, fitted on 50 snapshots spread over
/// the second half of each run so the early transfer transient is ignored.
pub fn growth_slope(model: &NetworkModel, x0: &[f64], t_end: f64, replicas: usize, seed: u64) -> Result<GrowthSlope> {
    if !(t_end > 0.0) || replicas < 2 {
        return Err(contract("need a positive horizon and at least two replicas"));
    }
    let times: Vec<f64> = (0..50).map(|k| t_end * (0.5 + 0.5 * k as f64 / 49.0)).collect();
    let runs = rng::replicas(seed, replicas, |_, rng| {
        let mut snaps = Snapshots { model, times: &times, next: 0, states: Vec::new() };
        sim::run(model, x0, t_end, rng, &mut snaps)?;
        let totals: Vec<f64> = snaps.states.iter().map(|x| x.iter().sum()).collect();
        Ok(stats::ols_slope(&times[..totals.len()], &totals))
    });
    let slopes: Vec<f64> = runs.into_iter().collect::<Result<_>>()?;
    Ok(GrowthSlope {
        slope: stats::mean_ci(&slopes),
        expected: model.growth_constants().map(|c| c.iter().sum()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationTrend {
    /// `(R, mean sup deviation)` over `[0, R]` for paths started at `R s0`.
    pub points: Vec<(f64, Estimate)>,
    /// Means strictly decrease with `R`.
    pub decreasing: bool,
}

/// Mean of `sup_{t <= R} || X_t / ||X_t||_1 - S_t ||_1` for each scale `R`,
/// with `X` and the scaled process `S` coupled through common random numbers.
pub fn scaled_deviation_trend(
    model: &NetworkModel,
    s0: &[f64],
    scales: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<DeviationTrend> {
    if replicas < 2 {
        return Err(contract("need at least two replicas"));
    }
    let mut points = Vec::with_capacity(scales.len());
    for &r in scales {
        let devs: Vec<f64> = rng::replicas(seed, replicas, |k, _| sim::coupled_deviation(model, s0, r, r, seed, k))
            .into_iter()
            .collect::<Result<_>>()?;
        points.push((r, stats::mean_ci(&devs)));
    }
    let decreasing = points.windows(2).all(|w| w[1].1.value < w[0].1.value);
    Ok(DeviationTrend { points, decreasing })
}
