//! Share of the first patch in growing two-patch multiplicative models.
//!
//! With relative uniform transfers the share tends to a Beta law whose
//! parameters are `(theta_{2,1}, theta_{1,2})` up to a common scale, so only
//! their ratio and the Beta shape are checked.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{contract, Error, Result};
use crate::model::{Edge, NetworkModel};
use crate::rng;
use crate::sim;
use crate::stats::{self, Estimate};

/// Significance level of the goodness-of-fit check.
pub const KS_LEVEL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaReport {
    pub replicas: usize,
    pub sample_mean: Estimate,
    pub sample_variance: f64,
    /// Moment-matched `(alpha, beta)`.
    pub fitted: Option<(f64, f64)>,
    /// `alpha / beta = m / (1 - m)` with a 95% delta-method interval.
    pub ratio: Option<Estimate>,
    /// `theta_{2,1} / theta_{1,2}`.
    pub expected_ratio: f64,
    pub ratio_ok: bool,
    pub ks: Option<f64>,
    pub ks_critical: f64,
    pub ks_ok: bool,
    /// Why no fit was produced.
    pub failure: Option<String>,
    /// Observed shares, in replica order.
    pub shares: Vec<f64>,
}

impl BetaReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.ratio_ok && self.ks_ok
    }
}

fn state_free_rate(model: &NetworkModel, e: Edge) -> Result<f64> {
    let r = model.rate(e);
    if r.is_state_free() {
        Ok(r.eval(&[0.0, 0.0], e))
    } else {
        Err(contract(format!("rate on {e} must be state-free")))
    }
}

/// Collects `x_1 / (x_1 + x_2)` at `t_end` over replicas and fits a Beta by
/// moments.
pub fn beta_diagnostic(
    model: &NetworkModel,
    x0: &[f64],
    t_end: f64,
    replicas: usize,
    seed: u64,
) -> Result<BetaReport> {
    let c = model.growth_constants().ok_or_else(|| contract("growth must be constant"))?;
    if model.n() != 2 || !sim::is_multiplicative(model) {
        return Err(contract("model must be a two-patch multiplicative model"));
    }
    if c[0] + c[1] < 0.0 {
        return Err(contract("growth constants must have a nonnegative sum"));
    }
    if replicas < 2 {
        return Err(contract("need at least two replicas"));
    }
    let up = state_free_rate(model, Edge::new(1, 0))?;
    let down = state_free_rate(model, Edge::new(0, 1))?;
    if !(up > 0.0 && down > 0.0) {
        return Err(Error::Unsupported("both transfer rates must be positive".into()));
    }
    let runs = rng::replicas(seed, replicas, |_, rng| {
        sim::run(model, x0, t_end, rng, &mut ()).map(|s| {
            let total = s.x_end[0] + s.x_end[1];
            if total > 0.0 {
                s.x_end[0] / total
            } else {
                f64::NAN
            }
        })
    });
    let shares: Vec<f64> = runs.into_iter().collect::<Result<_>>()?;
    let expected_ratio = up / down;
    let ks_critical = stats::ks_critical(KS_LEVEL, replicas);
    let mut report = BetaReport {
        replicas,
        sample_mean: Estimate { value: f64::NAN, half_width: f64::INFINITY },
        sample_variance: f64::NAN,
        fitted: None,
        ratio: None,
        expected_ratio,
        ratio_ok: false,
        ks: None,
        ks_critical,
        ks_ok: false,
        failure: None,
        shares,
    };
    if report.shares.iter().any(|s| s.is_nan()) {
        report.failure = Some("some replica has zero total population".into());
        return Ok(report);
    }
    let m = stats::mean(&report.shares);
    let v = stats::variance(&report.shares);
    report.sample_mean = stats::mean_ci(&report.shares);
    report.sample_variance = v;
    if !(v > 0.0) || m <= 0.0 || m >= 1.0 || v >= m * (1.0 - m) {
        report.failure = Some(format!("degenerate sample (mean {m}, variance {v})"));
        return Ok(report);
    }
    let common = m * (1.0 - m) / v - 1.0;
    let (a, b) = (m * common, (1.0 - m) * common);
    report.fitted = Some((a, b));
    let se = stats::std_error(&report.shares) / ((1.0 - m) * (1.0 - m));
    let ratio = Estimate { value: m / (1.0 - m), half_width: stats::normal_quantile(0.95) * se };
    report.ratio_ok = ratio.covers(expected_ratio, 1.0);
    report.ratio = Some(ratio);
    let law = Beta::new(a, b).map_err(|e| Error::Internal(format!("beta fit: {e}")))?;
    let ks = stats::ks_statistic(&report.shares, |u| law.cdf(u));
    report.ks_ok = ks < ks_critical;
    report.ks = Some(ks);
    Ok(report)
}
