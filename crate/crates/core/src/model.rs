//! Network description: patches, growth fields, transfer rates and transfer
//! amplitude laws, plus the validation audit and the two pointwise quantities
//! every other module consumes (transfer quantiles and debits).
//!
//! Patches are indexed from zero internally. Files and reports print them
//! one-based, the way edges are usually written for these networks.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow;

/// Resolution of the midpoint rule used for laws that only expose a quantile
/// function.
pub const QUADRATURE_POINTS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatchClass {
    Source,
    Neutral,
    Sink,
}

impl fmt::Display for PatchClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PatchClass::Source => "source",
            PatchClass::Neutral => "neutral",
            PatchClass::Sink => "sink",
        };
        f.write_str(s)
    }
}

/// An ordered pair of distinct patches (zero-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
}

impl Edge {
    pub fn new(from: usize, to: usize) -> Self {
        Edge { from, to }
    }

    /// Builds an edge from one-based patch numbers.
    pub fn one_based(from: usize, to: usize) -> Self {
        assert!(from >= 1 && to >= 1, "one-based indices start at 1");
        Edge { from: from - 1, to: to - 1 }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.from + 1, self.to + 1)
    }
}

/// Autonomous growth of one patch. Every variant depends on the patch's own
/// population only.
#[derive(Debug, Clone, PartialEq)]
pub enum GrowthSpec {
    /// `c` when `c >= 0`, and `c * 1{y > 0}` when `c < 0`.
    Constant { rate: f64 },
    /// `alpha * y * (beta - y)_+ + c`.
    Logistic { alpha: f64, beta: f64, c: f64 },
    /// `-c * y / (alpha + y)`; reaches zero only asymptotically, so draining
    /// is declared at [`flow::DRAIN_THRESHOLD`].
    SinkRelease { c: f64, alpha: f64 },
    /// Piecewise-linear interpolation of `values` at `knots`, held constant
    /// outside the knot range.
    Tabulated { knots: Vec<f64>, values: Vec<f64> },
    /// `intercept + slope * y`. Unbounded unless `slope == 0`; used for
    /// relaxation models that sit outside the source/neutral/sink scheme.
    Affine { intercept: f64, slope: f64 },
}

impl GrowthSpec {
    pub fn constant(rate: f64) -> Self {
        GrowthSpec::Constant { rate }
    }

    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            GrowthSpec::Constant { rate } => {
                if rate >= 0.0 || y > 0.0 {
                    rate
                } else {
                    0.0
                }
            }
            GrowthSpec::Logistic { alpha, beta, c } => alpha * y * (beta - y).max(0.0) + c,
            GrowthSpec::SinkRelease { c, alpha } => -c * y / (alpha + y),
            GrowthSpec::Tabulated { ref knots, ref values } => interpolate(knots, values, y),
            GrowthSpec::Affine { intercept, slope } => intercept + slope * y,
        }
    }

    /// `lim_{y -> inf} phi(y)`, possibly infinite.
    pub fn limit_at_infinity(&self) -> f64 {
        match *self {
            GrowthSpec::Constant { rate } => rate,
            GrowthSpec::Logistic { c, .. } => c,
            GrowthSpec::SinkRelease { c, .. } => -c,
            GrowthSpec::Tabulated { ref values, .. } => *values.last().expect("non-empty table"),
            GrowthSpec::Affine { intercept, slope } => {
                if slope > 0.0 {
                    f64::INFINITY
                } else if slope < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    intercept
                }
            }
        }
    }

    /// `sup_{y >= lo} phi(y)` in closed form.
    pub fn sup_from(&self, lo: f64) -> f64 {
        let lo = lo.max(0.0);
        match *self {
            GrowthSpec::Constant { .. } => self.eval(lo),
            GrowthSpec::Logistic { alpha, beta, c } => {
                let peak = 0.5 * beta;
                if lo <= peak {
                    alpha * peak * peak + c
                } else {
                    self.eval(lo)
                }
            }
            // decreasing in y
            GrowthSpec::SinkRelease { .. } => self.eval(lo),
            GrowthSpec::Tabulated { ref knots, ref values } => knots
                .iter()
                .zip(values)
                .filter(|(k, _)| **k >= lo)
                .map(|(_, v)| *v)
                .fold(self.eval(lo), f64::max)
                .max(*values.last().expect("non-empty table")),
            GrowthSpec::Affine { intercept, slope } => {
                if slope > 0.0 {
                    f64::INFINITY
                } else {
                    intercept + slope * lo
                }
            }
        }
    }

    /// `sup_{y >= 0} |phi(y)|` in closed form, possibly infinite.
    pub fn sup_abs(&self) -> f64 {
        match *self {
            GrowthSpec::Constant { rate } => rate.abs(),
            GrowthSpec::Logistic { alpha, beta, c } => (alpha * beta * beta / 4.0 + c).abs().max(c.abs()),
            GrowthSpec::SinkRelease { c, .. } => c.abs(),
            GrowthSpec::Tabulated { ref values, .. } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
            GrowthSpec::Affine { intercept, slope } => {
                if slope == 0.0 {
                    intercept.abs()
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    fn check_params(&self) -> std::result::Result<(), String> {
        let finite = |v: f64, name: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be finite"))
            }
        };
        match *self {
            GrowthSpec::Constant { rate } => finite(rate, "rate"),
            GrowthSpec::Logistic { alpha, beta, c } => {
                for (v, n) in [(alpha, "alpha"), (beta, "beta"), (c, "c")] {
                    finite(v, n)?;
                    if v <= 0.0 {
                        return Err(format!("logistic {n} must be positive"));
                    }
                }
                Ok(())
            }
            GrowthSpec::SinkRelease { c, alpha } => {
                for (v, n) in [(c, "c"), (alpha, "alpha")] {
                    finite(v, n)?;
                    if v <= 0.0 {
                        return Err(format!("sink release {n} must be positive"));
                    }
                }
                Ok(())
            }
            GrowthSpec::Tabulated { ref knots, ref values } => {
                if knots.is_empty() || knots.len() != values.len() {
                    return Err("tabulated growth needs matching, non-empty knots and values".into());
                }
                if knots.iter().chain(values).any(|v| !v.is_finite()) {
                    return Err("tabulated growth entries must be finite".into());
                }
                if knots[0] < 0.0 || knots.windows(2).any(|w| w[1] <= w[0]) {
                    return Err("tabulated knots must be nonnegative and strictly increasing".into());
                }
                Ok(())
            }
            GrowthSpec::Affine { intercept, slope } => {
                finite(intercept, "intercept")?;
                finite(slope, "slope")
            }
        }
    }
}

fn interpolate(knots: &[f64], values: &[f64], y: f64) -> f64 {
    if y <= knots[0] {
        return values[0];
    }
    let last = knots.len() - 1;
    if y >= knots[last] {
        return values[last];
    }
    let k = knots.partition_point(|&u| u <= y) - 1;
    let w = (y - knots[k]) / (knots[k + 1] - knots[k]);
    values[k] + w * (values[k + 1] - values[k])
}

/// Increasing, subadditive, coercive rate profile `offset + scale * y^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta {
    pub offset: f64,
    pub scale: f64,
    pub exponent: f64,
}

impl Theta {
    pub fn eval(&self, y: f64) -> f64 {
        self.offset + self.scale * y.max(0.0).powf(self.exponent)
    }
}

/// Transfer rate on one ordered pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateSpec {
    Zero,
    Constant { rate: f64 },
    /// `(1 ∨ x_i)^exponent`.
    PowerLaw { exponent: f64 },
    /// `multiplier * theta(x_i)`.
    Coercive { theta: Theta, multiplier: f64 },
    /// `gamma * x_i * (eps + x_j) / (eps_prime + x_j)`: transfers slow down as
    /// the target fills up when `eps < eps_prime`.
    CarryingCapacity { gamma: f64, eps: f64, eps_prime: f64 },
}

impl RateSpec {
    pub fn eval(&self, x: &[f64], edge: Edge) -> f64 {
        let xi = x[edge.from];
        match *self {
            RateSpec::Zero => 0.0,
            RateSpec::Constant { rate } => rate,
            RateSpec::PowerLaw { exponent } => xi.max(1.0).powf(exponent),
            RateSpec::Coercive { theta, multiplier } => multiplier * theta.eval(xi),
            RateSpec::CarryingCapacity { gamma, eps, eps_prime } => {
                let xj = x[edge.to];
                gamma * xi * (eps + xj) / (eps_prime + xj)
            }
        }
    }

    /// Upper bound of the rate over the box `lo <= x <= hi` (coordinate-wise).
    pub fn majorant(&self, lo: &[f64], hi: &[f64], edge: Edge) -> f64 {
        match *self {
            RateSpec::Zero => 0.0,
            RateSpec::Constant { rate } => rate,
            RateSpec::PowerLaw { exponent } => hi[edge.from].max(1.0).powf(exponent),
            RateSpec::Coercive { theta, multiplier } => multiplier * theta.eval(hi[edge.from]),
            RateSpec::CarryingCapacity { gamma, eps, eps_prime } => {
                // (eps + y) / (eps' + y) is monotone in y, so an endpoint wins.
                let ratio = |y: f64| (eps + y) / (eps_prime + y);
                let r = ratio(lo[edge.to]).max(ratio(hi[edge.to]));
                gamma * hi[edge.from] * r
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, RateSpec::Zero)
    }

    /// True when the rate does not depend on the state.
    pub fn is_state_free(&self) -> bool {
        matches!(self, RateSpec::Zero | RateSpec::Constant { .. })
    }

    fn check_params(&self) -> std::result::Result<(), String> {
        let positive = |v: f64, n: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{n} must be a positive finite number"))
            }
        };
        match *self {
            RateSpec::Zero => Ok(()),
            RateSpec::Constant { rate } => {
                if rate.is_finite() && rate >= 0.0 {
                    Ok(())
                } else {
                    Err("constant rate must be finite and nonnegative".into())
                }
            }
            RateSpec::PowerLaw { exponent } => positive(exponent, "power-law exponent"),
            RateSpec::Coercive { theta, multiplier } => {
                positive(theta.offset, "coercive offset")?;
                positive(theta.scale, "coercive scale")?;
                positive(theta.exponent, "coercive exponent")?;
                positive(multiplier, "coercive multiplier")
            }
            RateSpec::CarryingCapacity { gamma, eps, eps_prime } => {
                positive(gamma, "gamma")?;
                positive(eps, "eps")?;
                positive(eps_prime, "eps_prime")
            }
        }
    }
}

/// A law on `[0, 1]` with a piecewise-linear density, used as the relative
/// share of the origin's population that moves.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeLaw {
    knots: Vec<f64>,
    density: Vec<f64>,
    cdf: Vec<f64>,
    mean: f64,
    second_moment: f64,
}

impl RelativeLaw {
    /// `density` is given at `knots` and interpolated linearly; it is
    /// normalised to total mass one.
    pub fn new(knots: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != density.len() {
            return Err(Error::InvalidModel(
                "relative law needs at least two knots and one density value per knot".into(),
            ));
        }
        if knots.iter().chain(&density).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("relative law entries must be finite".into()));
        }
        if knots[0] < 0.0 || *knots.last().unwrap() > 1.0 || knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidModel(
                "relative law knots must be strictly increasing inside [0, 1]".into(),
            ));
        }
        if density.iter().any(|&d| d < 0.0) {
            return Err(Error::InvalidModel("relative law density must be nonnegative".into()));
        }
        let mut cdf = Vec::with_capacity(knots.len());
        cdf.push(0.0);
        let (mut m1, mut m2) = (0.0, 0.0);
        for k in 0..knots.len() - 1 {
            let (a, b) = (knots[k], knots[k + 1]);
            let (fa, fb) = (density[k], density[k + 1]);
            let mid = 0.5 * (a + b);
            let fm = 0.5 * (fa + fb);
            let w = b - a;
            cdf.push(cdf[k] + 0.5 * w * (fa + fb));
            // Simpson is exact for the quadratic and cubic integrands here.
            m1 += w / 6.0 * (a * fa + 4.0 * mid * fm + b * fb);
            m2 += w / 6.0 * (a * a * fa + 4.0 * mid * mid * fm + b * b * fb);
        }
        let total = *cdf.last().unwrap();
        if total <= 0.0 {
            return Err(Error::InvalidModel("relative law has zero mass".into()));
        }
        let density: Vec<f64> = density.iter().map(|d| d / total).collect();
        let cdf: Vec<f64> = cdf.iter().map(|c| c / total).collect();
        Ok(RelativeLaw { knots, density, cdf, mean: m1 / total, second_moment: m2 / total })
    }

    /// Uniform law on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo, hi], vec![1.0, 1.0])
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    pub fn cdf(&self, u: f64) -> f64 {
        if u <= self.knots[0] {
            return 0.0;
        }
        let last = self.knots.len() - 1;
        if u >= self.knots[last] {
            return 1.0;
        }
        let k = self.knots.partition_point(|&v| v <= u) - 1;
        let w = u - self.knots[k];
        let slope = (self.density[k + 1] - self.density[k]) / (self.knots[k + 1] - self.knots[k]);
        self.cdf[k] + self.density[k] * w + 0.5 * slope * w * w
    }

    /// Generalised inverse `inf{u : F(u) >= xi}`; zero at `xi == 0`.
    pub fn quantile(&self, xi: f64) -> f64 {
        if xi <= 0.0 {
            return 0.0;
        }
        let last = self.knots.len() - 1;
        if xi >= 1.0 {
            // smallest u with full mass: end of the last segment carrying mass
            let k = (0..last).rev().find(|&k| self.cdf[k + 1] > self.cdf[k]).unwrap_or(0);
            return self.knots[k + 1];
        }
        let k = (0..last).find(|&k| self.cdf[k + 1] >= xi).unwrap_or(last - 1);
        let target = xi - self.cdf[k];
        let f0 = self.density[k];
        let h = self.knots[k + 1] - self.knots[k];
        let slope = (self.density[k + 1] - f0) / h;
        let disc = (f0 * f0 + 2.0 * slope * target).max(0.0);
        let denom = f0 + disc.sqrt();
        let w = if denom > 0.0 { 2.0 * target / denom } else { 0.0 };
        (self.knots[k] + w.clamp(0.0, h)).min(self.knots[k + 1])
    }
}

/// Quantile function supplied by the caller: `(x, xi) -> amount`. The result
/// is clamped into `[0, x_i]`.
#[derive(Clone)]
pub struct CustomQuantile(pub Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>);

impl fmt::Debug for CustomQuantile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomQuantile(..)")
    }
}

/// Law of the transferred amount on one ordered pair.
#[derive(Debug, Clone)]
pub enum AmplitudeLaw {
    /// Uniform on `[0, x_i]`.
    UniformFraction,
    /// `x_i` times a draw from a fixed law on `[0, 1]`.
    Relative(RelativeLaw),
    /// Point mass at `min(1, x_i)`.
    UnitDirac,
    Custom(CustomQuantile),
}

impl AmplitudeLaw {
    /// Amount moved for quantile level `xi`, in `[0, x_i]`.
    pub fn quantile(&self, x: &[f64], edge: Edge, xi: f64) -> f64 {
        let xi_pop = x[edge.from];
        if xi <= 0.0 || xi_pop <= 0.0 {
            return 0.0;
        }
        let amount = match self {
            AmplitudeLaw::UniformFraction => xi.min(1.0) * xi_pop,
            AmplitudeLaw::Relative(law) => law.quantile(xi) * xi_pop,
            AmplitudeLaw::UnitDirac => xi_pop.min(1.0),
            AmplitudeLaw::Custom(q) => (q.0)(x, xi),
        };
        if amount.is_nan() {
            0.0
        } else {
            amount.clamp(0.0, xi_pop)
        }
    }

    /// First and second moments of the amount at state `x`.
    pub fn moments(&self, x: &[f64], edge: Edge) -> (f64, f64) {
        let y = x[edge.from].max(0.0);
        match self {
            AmplitudeLaw::UniformFraction => (0.5 * y, y * y / 3.0),
            AmplitudeLaw::Relative(law) => (law.mean() * y, law.second_moment() * y * y),
            AmplitudeLaw::UnitDirac => {
                let a = y.min(1.0);
                (a, a * a)
            }
            AmplitudeLaw::Custom(_) => {
                let n = QUADRATURE_POINTS as f64;
                let (mut m1, mut m2) = (0.0, 0.0);
                for k in 0..QUADRATURE_POINTS {
                    let q = self.quantile(x, edge, (k as f64 + 0.5) / n);
                    m1 += q;
                    m2 += q * q;
                }
                (m1 / n, m2 / n)
            }
        }
    }

    /// True for laws whose relative share does not depend on the state.
    pub fn is_relative(&self) -> bool {
        matches!(self, AmplitudeLaw::UniformFraction | AmplitudeLaw::Relative(_))
    }

    /// Relative share for quantile level `xi` (multiplicative laws only).
    pub fn relative_quantile(&self, xi: f64) -> Option<f64> {
        match self {
            AmplitudeLaw::UniformFraction => Some(xi.clamp(0.0, 1.0)),
            AmplitudeLaw::Relative(law) => Some(law.quantile(xi)),
            _ => None,
        }
    }
}

/// Population vector with a timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: Vec<f64>,
    pub t: f64,
}

impl State {
    pub fn new(x: Vec<f64>) -> Self {
        State { x, t: 0.0 }
    }

    pub fn total(&self) -> f64 {
        self.x.iter().sum()
    }
}

/// Full description of one process instance.
///
/// Rates and amplitudes are stored for every ordered pair; pairs that were
/// never configured carry [`RateSpec::Zero`]. The active set records the edges
/// declared to transfer at a positive rate whenever their origin is occupied.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    name: String,
    classes: Vec<PatchClass>,
    growth: Vec<GrowthSpec>,
    active: Vec<Edge>,
    rates: Vec<RateSpec>,
    amplitudes: Vec<AmplitudeLaw>,
    transfer_edges: Vec<Edge>,
    m_bound: Option<f64>,
}

impl NetworkModel {
    pub fn builder(name: impl Into<String>) -> ModelBuilder {
        ModelBuilder { name: name.into(), patches: Vec::new(), edges: Vec::new(), m_bound: None }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[PatchClass] {
        &self.classes
    }

    pub fn class(&self, i: usize) -> PatchClass {
        self.classes[i]
    }

    pub fn growth(&self, i: usize) -> &GrowthSpec {
        &self.growth[i]
    }

    pub fn growths(&self) -> &[GrowthSpec] {
        &self.growth
    }

    /// Declared active edges, sorted.
    pub fn active_edges(&self) -> &[Edge] {
        &self.active
    }

    pub fn is_active(&self, e: Edge) -> bool {
        self.active.binary_search(&e).is_ok()
    }

    /// Every ordered pair with a rate other than [`RateSpec::Zero`], sorted.
    pub fn transfer_edges(&self) -> &[Edge] {
        &self.transfer_edges
    }

    pub fn rate(&self, e: Edge) -> &RateSpec {
        &self.rates[e.from * self.n() + e.to]
    }

    pub fn amplitude(&self, e: Edge) -> &AmplitudeLaw {
        &self.amplitudes[e.from * self.n() + e.to]
    }

    pub fn patches_of(&self, class: PatchClass) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.classes[i] == class).collect()
    }

    pub fn sinks(&self) -> Vec<usize> {
        self.patches_of(PatchClass::Sink)
    }

    pub fn all_growth_constant(&self) -> bool {
        self.growth.iter().all(|g| matches!(g, GrowthSpec::Constant { .. }))
    }

    /// Growth constants when every patch has constant growth.
    pub fn growth_constants(&self) -> Option<Vec<f64>> {
        self.growth
            .iter()
            .map(|g| match *g {
                GrowthSpec::Constant { rate } => Some(rate),
                _ => None,
            })
            .collect()
    }

    /// The supplied bound on `sum_i |phi^i|`, or the closed-form one.
    pub fn m_bound(&self) -> f64 {
        self.m_bound.unwrap_or_else(|| self.derived_m_bound())
    }

    pub fn supplied_m_bound(&self) -> Option<f64> {
        self.m_bound
    }

    pub fn derived_m_bound(&self) -> f64 {
        self.growth.iter().map(GrowthSpec::sup_abs).sum()
    }

    pub fn growth_at(&self, i: usize, x: &[f64]) -> f64 {
        self.growth[i].eval(x[i])
    }

    pub fn rate_at(&self, e: Edge, x: &[f64]) -> f64 {
        self.rate(e).eval(x, e)
    }

    /// Transfer amount `q_{i,j}(x, xi)`.
    pub fn quantile(&self, e: Edge, x: &[f64], xi: f64) -> f64 {
        self.amplitude(e).quantile(x, e, xi)
    }

    /// Expected instantaneous flux on `e`: rate times mean amount.
    pub fn debit(&self, e: Edge, x: &[f64]) -> f64 {
        let rate = self.rate_at(e, x);
        if rate == 0.0 {
            return 0.0;
        }
        rate * self.amplitude(e).moments(x, e).0
    }

    /// Edges adjacent lists over the active set.
    pub fn active_successors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n()];
        for e in &self.active {
            adj[e.from].push(e.to);
        }
        adj
    }

    pub fn check_edge(&self, e: Edge) -> Result<()> {
        if e.from >= self.n() || e.to >= self.n() || e.from == e.to {
            return Err(Error::Contract(format!("{e} is not an ordered pair of distinct patches")));
        }
        Ok(())
    }

    pub fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::Contract(format!("state has {} coordinates, model has {} patches", x.len(), self.n())));
        }
        if x.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Contract("state coordinates must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

pub struct ModelBuilder {
    name: String,
    patches: Vec<(PatchClass, GrowthSpec)>,
    edges: Vec<(Edge, RateSpec, AmplitudeLaw, bool)>,
    m_bound: Option<f64>,
}

impl ModelBuilder {
    pub fn patch(mut self, class: PatchClass, growth: GrowthSpec) -> Self {
        self.patches.push((class, growth));
        self
    }

    /// Adds an active edge.
    pub fn edge(mut self, e: Edge, rate: RateSpec, amplitude: AmplitudeLaw) -> Self {
        self.edges.push((e, rate, amplitude, true));
        self
    }

    /// Adds a transfer pair outside the active set (its rate may vanish on
    /// occupied states).
    pub fn passive_edge(mut self, e: Edge, rate: RateSpec, amplitude: AmplitudeLaw) -> Self {
        self.edges.push((e, rate, amplitude, false));
        self
    }

    pub fn m_bound(mut self, m: f64) -> Self {
        self.m_bound = Some(m);
        self
    }

    /// Checks structure (indices, parameter ranges) and freezes the model.
    /// Assumption-level properties are audited by [`validate_model`].
    pub fn build(self) -> Result<NetworkModel> {
        let n = self.patches.len();
        if n == 0 {
            return Err(Error::InvalidModel("a model needs at least one patch".into()));
        }
        for (i, (_, g)) in self.patches.iter().enumerate() {
            g.check_params().map_err(|m| Error::InvalidModel(format!("patch {}: {m}", i + 1)))?;
        }
        if let Some(m) = self.m_bound {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::InvalidModel("m_bound must be finite and nonnegative".into()));
            }
        }
        let mut rates = vec![RateSpec::Zero; n * n];
        let mut amplitudes = vec![AmplitudeLaw::UniformFraction; n * n];
        let mut seen = vec![false; n * n];
        let mut active = Vec::new();
        for (e, rate, amp, is_active) in self.edges {
            if e.from >= n || e.to >= n || e.from == e.to {
                return Err(Error::InvalidModel(format!("edge {e} is not a pair of distinct patches")));
            }
            let k = e.from * n + e.to;
            if seen[k] {
                return Err(Error::InvalidModel(format!("edge {e} declared twice")));
            }
            seen[k] = true;
            rate.check_params().map_err(|m| Error::InvalidModel(format!("edge {e}: {m}")))?;
            rates[k] = rate;
            amplitudes[k] = amp;
            if is_active {
                active.push(e);
            }
        }
        active.sort();
        let mut transfer_edges = Vec::new();
        for from in 0..n {
            for to in 0..n {
                if from != to && !rates[from * n + to].is_zero() {
                    transfer_edges.push(Edge { from, to });
                }
            }
        }
        let (classes, growth) = self.patches.into_iter().unzip();
        Ok(NetworkModel {
            name: self.name,
            classes,
            growth,
            active,
            rates,
            amplitudes,
            transfer_edges,
            m_bound: self.m_bound,
        })
    }
}

/// Where a violated invariant lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "index")]
pub enum Location {
    Model,
    Patch(usize),
    Edge(Edge),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Model => f.write_str("model"),
            Location::Patch(i) => write!(f, "patch {}", i + 1),
            Location::Edge(e) => write!(f, "edge {e}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Invariant {
    /// Sources first, then neutral patches, then sinks.
    PatchLayout,
    /// Growth sign rule for the patch's class.
    GrowthSign,
    /// The growth field must be bounded and `m_bound` must dominate it.
    GrowthBound,
    /// Sinks must drain in finite time from bounded states.
    FiniteDrain,
    /// Constant growth needs at least one nonzero constant.
    NonTrivialGrowth,
    /// Active edges must have positive rate whenever their origin is occupied.
    ActiveRatePositive,
    /// Coercive rate profile parameters out of range.
    CoerciveProfile,
    /// The amount law must stay on `[0, x_i]` and be monotone in the level.
    AmplitudeSupport,
    /// Growth may push the population below zero.
    Nonnegativity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub invariant: Invariant,
    pub location: Location,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, invariant: Invariant) -> bool {
        self.violations.iter().any(|v| v.invariant == invariant)
    }

    fn push(&mut self, invariant: Invariant, location: Location, message: impl Into<String>) {
        self.violations.push(Violation { invariant, location, message: message.into() });
    }
}

const PROBE_LEVELS: [f64; 9] = [0.0, 1e-3, 0.5, 1.0, 2.0, 10.0, 100.0, 1e3, 1e4];
const DRAIN_PROBES: [f64; 4] = [0.5, 1.0, 10.0, 100.0];

/// Audits a model against every structural invariant. Violations are data:
/// an empty report means the model is valid.
pub fn validate_model(model: &NetworkModel) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = model.n();

    if model.classes.windows(2).any(|w| w[1] < w[0]) {
        report.push(
            Invariant::PatchLayout,
            Location::Model,
            "patches must be ordered sources, then neutral patches, then sinks",
        );
    }

    for i in 0..n {
        let g = model.growth(i);
        let loc = Location::Patch(i);
        match model.class(i) {
            PatchClass::Source => {
                let ok = match *g {
                    GrowthSpec::Constant { rate } => rate > 0.0,
                    GrowthSpec::Logistic { .. } => true,
                    GrowthSpec::SinkRelease { .. } => false,
                    GrowthSpec::Tabulated { ref values, .. } => values.iter().all(|&v| v > 0.0),
                    GrowthSpec::Affine { intercept, slope } => intercept > 0.0 && slope >= 0.0,
                };
                if !ok {
                    report.push(Invariant::GrowthSign, loc, "source growth must be positive everywhere");
                }
            }
            PatchClass::Neutral => {
                let ok = match *g {
                    GrowthSpec::Constant { rate } => rate == 0.0,
                    GrowthSpec::Tabulated { ref values, .. } => values.iter().all(|&v| v == 0.0),
                    GrowthSpec::Affine { intercept, slope } => intercept == 0.0 && slope == 0.0,
                    _ => false,
                };
                if !ok {
                    report.push(Invariant::GrowthSign, loc, "neutral growth must vanish identically");
                }
            }
            PatchClass::Sink => {
                let ok = match *g {
                    GrowthSpec::Constant { rate } => rate < 0.0,
                    GrowthSpec::SinkRelease { .. } => true,
                    GrowthSpec::Logistic { .. } => false,
                    GrowthSpec::Tabulated { ref knots, ref values } => {
                        knots[0] == 0.0 && values[0] == 0.0 && values[1..].iter().all(|&v| v < 0.0) && values.len() > 1
                    }
                    GrowthSpec::Affine { intercept, slope } => intercept == 0.0 && slope < 0.0,
                };
                if !ok {
                    report.push(
                        Invariant::GrowthSign,
                        loc,
                        "sink growth must vanish at zero and be negative on occupied states",
                    );
                } else {
                    for &y in &DRAIN_PROBES {
                        let t = flow::coordinate_drain_time(g, y);
                        if !t.is_finite() {
                            report.push(
                                Invariant::FiniteDrain,
                                loc,
                                format!("sink does not drain in finite time from {y}"),
                            );
                            break;
                        }
                    }
                }
            }
        }
        if let GrowthSpec::Affine { intercept, .. } = *g {
            if intercept < 0.0 {
                report.push(Invariant::Nonnegativity, loc, "negative intercept drives the population below zero");
            }
        }
    }

    if let Some(cs) = model.growth_constants() {
        if cs.iter().all(|&c| c == 0.0) {
            report.push(Invariant::NonTrivialGrowth, Location::Model, "growth constants are all zero");
        }
    }

    let derived = model.derived_m_bound();
    match model.supplied_m_bound() {
        None if !derived.is_finite() => {
            report.push(Invariant::GrowthBound, Location::Model, "growth field is unbounded and no m_bound was supplied");
        }
        None => {}
        Some(m) => {
            let probed: f64 = model
                .growths()
                .iter()
                .map(|g| PROBE_LEVELS.iter().fold(0.0f64, |acc, &y| acc.max(g.eval(y).abs())))
                .sum();
            if probed > m * (1.0 + 1e-12) {
                report.push(
                    Invariant::GrowthBound,
                    Location::Model,
                    format!("m_bound {m} is below the probed growth magnitude {probed}"),
                );
            }
        }
    }

    for &e in model.active_edges() {
        let loc = Location::Edge(e);
        let rate = model.rate(e);
        if rate.is_zero() {
            report.push(Invariant::ActiveRatePositive, loc, "active edge has a zero rate");
            continue;
        }
        let mut x = vec![0.0; n];
        'probe: for &others in &[0.0, 1.0] {
            for &xi in &PROBE_LEVELS[1..] {
                x.iter_mut().for_each(|v| *v = others);
                x[e.from] = xi;
                if !(rate.eval(&x, e) > 0.0) {
                    report.push(
                        Invariant::ActiveRatePositive,
                        loc,
                        format!("rate vanishes at occupied origin population {xi}"),
                    );
                    break 'probe;
                }
            }
        }
    }

    for from in 0..n {
        for to in 0..n {
            if from == to {
                continue;
            }
            let e = Edge { from, to };
            let loc = Location::Edge(e);
            match *model.rate(e) {
                RateSpec::Coercive { theta, multiplier } => {
                    if theta.exponent > 1.0 {
                        report.push(Invariant::CoerciveProfile, loc, "profile exponent above one is not subadditive");
                    }
                    if multiplier < 1.0 {
                        report.push(Invariant::CoerciveProfile, loc, "multiplier must be at least one");
                    }
                }
                RateSpec::PowerLaw { exponent } if exponent > 1.0 => {
                    report.push(Invariant::CoerciveProfile, loc, "power-law exponent must lie in (0, 1]");
                }
                _ => {}
            }
            if let AmplitudeLaw::Custom(q) = model.amplitude(e) {
                if model.rate(e).is_zero() {
                    continue;
                }
                let mut x = vec![1.0; n];
                'levels: for &y in &[0.5, 1.0, 10.0] {
                    x[from] = y;
                    let mut prev = f64::NEG_INFINITY;
                    for k in 0..=16 {
                        let xi = k as f64 / 16.0;
                        let raw = (q.0)(&x, xi);
                        if !(raw >= 0.0 && raw <= y) {
                            report.push(Invariant::AmplitudeSupport, loc, format!("amount {raw} outside [0, {y}]"));
                            break 'levels;
                        }
                        if raw < prev {
                            report.push(Invariant::AmplitudeSupport, loc, "quantile is not monotone in the level");
                            break 'levels;
                        }
                        prev = raw;
                    }
                }
            }
        }
    }

    report
}

/// `q_{i,j}(x, xi)`: generalised inverse of the amplitude law.
pub fn quantile(model: &NetworkModel, edge: Edge, x: &[f64], xi: f64) -> Result<f64> {
    model.check_edge(edge)?;
    model.check_state(x)?;
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::Contract(format!("quantile level {xi} outside [0, 1]")));
    }
    Ok(model.quantile(edge, x, xi))
}

/// `d_{i,j}(x)`: rate times mean transferred amount.
pub fn debit(model: &NetworkModel, x: &[f64], edge: Edge) -> Result<f64> {
    model.check_edge(edge)?;
    model.check_state(x)?;
    Ok(model.debit(edge, x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_patch(c: (f64, f64)) -> NetworkModel {
        NetworkModel::builder("two")
            .patch(PatchClass::Source, GrowthSpec::constant(c.0))
            .patch(PatchClass::Sink, GrowthSpec::constant(c.1))
            .edge(Edge::new(0, 1), RateSpec::Constant { rate: 1.0 }, AmplitudeLaw::UniformFraction)
            .edge(Edge::new(1, 0), RateSpec::Constant { rate: 1.0 }, AmplitudeLaw::UniformFraction)
            .build()
            .unwrap()
    }

    #[test]
    fn valid_two_patch_model_has_empty_report() {
        let report = validate_model(&two_patch((1.0, -2.0)));
        assert!(report.is_valid(), "{:?}", report);
    }

    #[test]
    fn positive_sink_constant_is_a_sign_violation() {
        let model = NetworkModel::builder("bad")
            .patch(PatchClass::Source, GrowthSpec::constant(1.0))
            .patch(PatchClass::Sink, GrowthSpec::constant(1.0))
            .build()
            .unwrap();
        let report = validate_model(&model);
        assert!(report.has(Invariant::GrowthSign));
        assert_eq!(report.violations[0].location, Location::Patch(1));
    }

    #[test]
    fn active_edge_with_zero_rate_is_flagged() {
        let model = NetworkModel::builder("bad")
            .patch(PatchClass::Source, GrowthSpec::constant(1.0))
            .patch(PatchClass::Sink, GrowthSpec::constant(-2.0))
            .edge(Edge::new(0, 1), RateSpec::Zero, AmplitudeLaw::UniformFraction)
            .build()
            .unwrap();
        let report = validate_model(&model);
        assert!(report.has(Invariant::ActiveRatePositive));
        assert!(report.violations.iter().any(|v| v.location == Location::Edge(Edge::new(0, 1))));
    }

    #[test]
    fn layout_and_trivial_growth_are_flagged() {
        let model = NetworkModel::builder("bad")
            .patch(PatchClass::Sink, GrowthSpec::constant(0.0))
            .patch(PatchClass::Source, GrowthSpec::constant(0.0))
            .build()
            .unwrap();
        let report = validate_model(&model);
        assert!(report.has(Invariant::PatchLayout));
        assert!(report.has(Invariant::NonTrivialGrowth));
    }

    #[test]
    fn builder_rejects_structural_errors() {
        let self_loop = NetworkModel::builder("x")
            .patch(PatchClass::Source, GrowthSpec::constant(1.0))
            .edge(Edge::new(0, 0), RateSpec::Constant { rate: 1.0 }, AmplitudeLaw::UnitDirac)
            .build();
        assert!(matches!(self_loop, Err(Error::InvalidModel(_))));
        let negative = NetworkModel::builder("x")
            .patch(PatchClass::Source, GrowthSpec::constant(1.0))
            .patch(PatchClass::Sink, GrowthSpec::constant(-1.0))
            .edge(Edge::new(0, 1), RateSpec::Constant { rate: -1.0 }, AmplitudeLaw::UnitDirac)
            .build();
        assert!(negative.is_err());
    }

    #[test]
    fn quantile_examples() {
        let model = two_patch((1.0, -2.0));
        let e = Edge::new(0, 1);
        assert_eq!(quantile(&model, e, &[4.0, 0.0], 0.25).unwrap(), 1.0);

        let dirac = AmplitudeLaw::UnitDirac;
        for xi in [1e-9, 0.3, 1.0] {
            assert_eq!(dirac.quantile(&[0.3, 0.0], e, xi), 0.3);
        }

        let linear = AmplitudeLaw::Relative(RelativeLaw::new(vec![0.0, 1.0], vec![0.0, 2.0]).unwrap());
        assert!((linear.quantile(&[2.0, 0.0], e, 0.25) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quantile_at_zero_level_is_zero() {
        let e = Edge::new(0, 1);
        let x = [3.0, 1.0];
        for law in [
            AmplitudeLaw::UniformFraction,
            AmplitudeLaw::UnitDirac,
            AmplitudeLaw::Relative(RelativeLaw::uniform(0.2, 0.6).unwrap()),
        ] {
            assert_eq!(law.quantile(&x, e, 0.0), 0.0);
        }
    }

    #[test]
    fn quantile_rejects_bad_level() {
        let model = two_patch((1.0, -2.0));
        assert!(quantile(&model, Edge::new(0, 1), &[1.0, 1.0], 1.5).is_err());
        assert!(quantile(&model, Edge::new(0, 0), &[1.0, 1.0], 0.5).is_err());
    }

    #[test]
    fn debit_examples() {
        let model = two_patch((1.0, -2.0));
        assert_eq!(debit(&model, &[4.0, 0.0], Edge::new(0, 1)).unwrap(), 2.0);

        let zero = NetworkModel::builder("z")
            .patch(PatchClass::Source, GrowthSpec::constant(1.0))
            .patch(PatchClass::Sink, GrowthSpec::constant(-1.0))
            .build()
            .unwrap();
        assert_eq!(debit(&zero, &[4.0, 1.0], Edge::new(0, 1)).unwrap(), 0.0);

        let unitary = NetworkModel::builder("u")
            .patch(PatchClass::Source, GrowthSpec::constant(1.0))
            .patch(PatchClass::Sink, GrowthSpec::constant(-2.0))
            .edge(Edge::new(0, 1), RateSpec::PowerLaw { exponent: 1.0 }, AmplitudeLaw::UnitDirac)
            .build()
            .unwrap();
        assert_eq!(debit(&unitary, &[3.0, 0.0], Edge::new(0, 1)).unwrap(), 3.0);
    }

    #[test]
    fn relative_law_moments_and_cdf() {
        let law = RelativeLaw::new(vec![0.0, 1.0], vec![0.0, 2.0]).unwrap();
        assert!((law.mean() - 2.0 / 3.0).abs() < 1e-15);
        assert!((law.second_moment() - 0.5).abs() < 1e-15);
        assert!((law.cdf(0.5) - 0.25).abs() < 1e-15);

        let u = RelativeLaw::uniform(0.2, 0.6).unwrap();
        assert!((u.mean() - 0.4).abs() < 1e-15);
        assert!((u.quantile(0.5) - 0.4).abs() < 1e-15);
        assert_eq!(u.quantile(1.0), 0.6);
    }

    #[test]
    fn relative_law_rejects_bad_input() {
        assert!(RelativeLaw::new(vec![0.0], vec![1.0]).is_err());
        assert!(RelativeLaw::new(vec![0.5, 0.2], vec![1.0, 1.0]).is_err());
        assert!(RelativeLaw::new(vec![0.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(RelativeLaw::new(vec![0.0, 1.5], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn custom_quantile_uses_quadrature_for_moments() {
        let law = AmplitudeLaw::Custom(CustomQuantile(Arc::new(|x: &[f64], xi: f64| xi * xi * x[0])));
        let (m1, m2) = law.moments(&[3.0, 0.0], Edge::new(0, 1));
        // E[U^2] = 1/3, E[U^4] = 1/5; midpoint error is O(N^-2)
        assert!((m1 - 1.0).abs() < 1e-6);
        assert!((m2 - 9.0 / 5.0).abs() < 1e-5);
    }

    #[test]
    fn custom_quantile_out_of_support_is_flagged() {
        let model = NetworkModel::builder("c")
            .patch(PatchClass::Source, GrowthSpec::constant(1.0))
            .patch(PatchClass::Sink, GrowthSpec::constant(-2.0))
            .edge(
                Edge::new(0, 1),
                RateSpec::Constant { rate: 1.0 },
                AmplitudeLaw::Custom(CustomQuantile(Arc::new(|x: &[f64], xi: f64| 2.0 * xi * x[0]))),
            )
            .build()
            .unwrap();
        assert!(validate_model(&model).has(Invariant::AmplitudeSupport));
    }

    #[test]
    fn m_bound_checks() {
        let model = NetworkModel::builder("m")
            .patch(PatchClass::Source, GrowthSpec::constant(1.0))
            .patch(PatchClass::Sink, GrowthSpec::constant(-2.0))
            .m_bound(2.5)
            .build()
            .unwrap();
        assert!(validate_model(&model).has(Invariant::GrowthBound));
        assert_eq!(two_patch((1.0, -2.0)).m_bound(), 3.0);

        let affine = NetworkModel::builder("a")
            .patch(PatchClass::Source, GrowthSpec::Affine { intercept: 1.0, slope: -1.0 })
            .build()
            .unwrap();
        let report = validate_model(&affine);
        assert!(report.has(Invariant::GrowthBound));
        assert!(report.has(Invariant::GrowthSign));
    }

    #[test]
    fn growth_closed_forms() {
        let logistic = GrowthSpec::Logistic { alpha: 0.5, beta: 4.0, c: 1.0 };
        assert_eq!(logistic.eval(2.0), 0.5 * 2.0 * 2.0 + 1.0);
        assert_eq!(logistic.eval(10.0), 1.0);
        assert_eq!(logistic.sup_from(0.0), 3.0);
        assert_eq!(logistic.sup_from(3.0), 0.5 * 3.0 * 1.0 + 1.0);
        assert_eq!(logistic.limit_at_infinity(), 1.0);

        let release = GrowthSpec::SinkRelease { c: 2.0, alpha: 1.0 };
        assert_eq!(release.eval(1.0), -1.0);
        assert_eq!(release.limit_at_infinity(), -2.0);
        assert_eq!(release.sup_from(0.0), 0.0);

        let sink = GrowthSpec::constant(-2.0);
        assert_eq!(sink.eval(0.0), 0.0);
        assert_eq!(sink.eval(1e-300), -2.0);

        let table = GrowthSpec::Tabulated { knots: vec![0.0, 1.0, 2.0], values: vec![0.0, -1.0, -0.5] };
        assert_eq!(table.eval(0.5), -0.5);
        assert_eq!(table.eval(5.0), -0.5);
        assert_eq!(table.sup_from(0.5), -0.5);
        assert_eq!(table.sup_abs(), 1.0);
    }
}
