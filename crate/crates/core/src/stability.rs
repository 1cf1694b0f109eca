//! Structural audits, graph constructions, drift conditions and the
//! ergodicity classifier.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_model, Edge, GrowthSpec, Invariant, NetworkModel, PatchClass, RateSpec};
use crate::region::{Atom, Region};
use crate::rng;
use crate::sim::{self, Event, Observer};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub passed: bool,
    pub reasons: Vec<String>,
}

impl CheckReport {
    fn from_reasons(reasons: Vec<String>) -> Self {
        CheckReport { passed: reasons.is_empty(), reasons }
    }
}

/// Growth assumptions (sign rules, finite drain, layout) and graph
/// assumptions (every sink reachable from every patch, every neutral patch
/// reachable from some source).
pub fn check_assumptions(model: &NetworkModel) -> (CheckReport, CheckReport) {
    let report = validate_model(model);
    let growth_reasons = report
        .violations
        .iter()
        .filter(|v| {
            matches!(
                v.invariant,
                Invariant::GrowthSign | Invariant::FiniteDrain | Invariant::PatchLayout | Invariant::Nonnegativity
            )
        })
        .map(|v| v.to_string())
        .collect();

    let n = model.n();
    let succ = model.active_successors();
    let mut graph_reasons = Vec::new();
    let reach: Vec<Vec<bool>> = (0..n).map(|s| reachable(&succ, s)).collect();
    for j in model.sinks() {
        for (i, r) in reach.iter().enumerate() {
            if !r[j] {
                graph_reasons.push(format!("sink {} is not reachable from patch {}", j + 1, i + 1));
            }
        }
    }
    let sources = model.patches_of(PatchClass::Source);
    for j in model.patches_of(PatchClass::Neutral) {
        if !sources.iter().any(|&s| reach[s][j]) {
            graph_reasons.push(format!("neutral patch {} is not reachable from any source", j + 1));
        }
    }
    (CheckReport::from_reasons(growth_reasons), CheckReport::from_reasons(graph_reasons))
}

/// Patches reachable from `s` (including `s`).
fn reachable(succ: &[Vec<usize>], s: usize) -> Vec<bool> {
    let mut seen = vec![false; succ.len()];
    seen[s] = true;
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        for &v in &succ[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

pub fn strongly_connected(model: &NetworkModel) -> bool {
    let succ = model.active_successors();
    (0..model.n()).all(|s| reachable(&succ, s).iter().all(|&b| b))
}

pub fn weakly_connected(model: &NetworkModel) -> bool {
    let n = model.n();
    let mut undirected = vec![Vec::new(); n];
    for e in model.active_edges() {
        undirected[e.from].push(e.to);
        undirected[e.to].push(e.from);
    }
    reachable(&undirected, 0).iter().all(|&b| b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Ergodic,
    Transient,
    Unknown,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Ergodic => "Ergodic",
            Verdict::Transient => "Transient",
            Verdict::Unknown => "Unknown",
        })
    }
}

/// `sum_i c_i` and the traffic verdict for constant-growth models.
pub fn traffic_condition(model: &NetworkModel) -> Result<(f64, Verdict)> {
    let c = model
        .growth_constants()
        .ok_or_else(|| Error::Unsupported("the traffic condition needs constant growth on every patch".into()))?;
    if c.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidModel("growth constants must not all be zero".into()));
    }
    let sum: f64 = c.iter().sum();
    Ok((sum, if sum < 0.0 { Verdict::Ergodic } else { Verdict::Transient }))
}

/// `sup` of `sum_i phi^i` over the probe grid of `{min_{i in subset} x_i >= R}`:
/// subset coordinates take `{R, 2R, 4R}`, others `{0, R}`. The field is
/// separable, so the grid supremum is the sum of per-coordinate maxima.
pub fn drift_limit_probe(model: &NetworkModel, subset: &[usize], r_values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if r_values.iter().any(|&r| !(r > 0.0)) || r_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Contract("probe levels must be positive and increasing".into()));
    }
    if subset.iter().any(|&i| i >= model.n()) {
        return Err(Error::Contract("probe subset refers to a missing patch".into()));
    }
    Ok(r_values
        .iter()
        .map(|&r| {
            let total = (0..model.n())
                .map(|i| {
                    let g = model.growth(i);
                    let levels: &[f64] = if subset.contains(&i) { &[1.0, 2.0, 4.0] } else { &[0.0, 1.0] };
                    levels.iter().map(|&k| g.eval(k * r)).fold(f64::NEG_INFINITY, f64::max)
                })
                .sum();
            (r, total)
        })
        .collect())
}

/// `lim sum_i phi^i` as every coordinate grows, in closed form.
pub fn growth_limit_all(model: &NetworkModel) -> f64 {
    model.growths().iter().map(GrowthSpec::limit_at_infinity).sum()
}

/// `limsup sum_i phi^i` as the sink coordinates grow while the others are
/// free: sinks contribute their limit, other patches their supremum.
pub fn growth_limit_sinks(model: &NetworkModel) -> f64 {
    (0..model.n())
        .map(|i| {
            let g = model.growth(i);
            if model.class(i) == PatchClass::Sink {
                g.limit_at_infinity()
            } else {
                g.sup_from(0.0)
            }
        })
        .sum()
}

/// Closed-form upper bound of `sum_i phi^i` over a region. A total-population
/// atom is ignored (the bound stays valid), and a negated region is bounded
/// by the global supremum.
pub fn region_growth_sup(model: &NetworkModel, region: &Region) -> f64 {
    let n = model.n();
    let mut lower = vec![0.0f64; n];
    let mut empty = vec![false; n];
    if !region.negated {
        for atom in &region.atoms {
            match atom {
                Atom::MinAtLeast { patches, level } => {
                    for &i in patches {
                        lower[i] = lower[i].max(*level);
                    }
                }
                Atom::TotalAtLeast { .. } => {}
                Atom::Positive { patch } => lower[*patch] = lower[*patch].max(f64::MIN_POSITIVE),
                Atom::Empty { patch } => empty[*patch] = true,
            }
        }
    }
    (0..n)
        .map(|i| {
            let g = model.growth(i);
            if empty[i] {
                g.eval(0.0)
            } else {
                g.sup_from(lower[i])
            }
        })
        .sum()
}

/// `sup_{x >= 0} sum_i phi^i`, possibly infinite.
pub fn global_growth_sup(model: &NetworkModel) -> f64 {
    model.growths().iter().map(|g| g.sup_from(0.0)).sum()
}

/// Graph distance from each patch to the sink set over active edges
/// (`usize::MAX` when no sink is reachable).
pub fn distances_to_sinks(model: &NetworkModel) -> Vec<usize> {
    let n = model.n();
    let mut pred = vec![Vec::new(); n];
    for e in model.active_edges() {
        pred[e.to].push(e.from);
    }
    let mut d = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for s in model.sinks() {
        d[s] = 0;
        queue.push_back(s);
    }
    while let Some(u) = queue.pop_front() {
        for &v in &pred[u] {
            if d[v] == usize::MAX {
                d[v] = d[u] + 1;
                queue.push_back(v);
            }
        }
    }
    d
}

/// One active edge per source or neutral patch, each strictly decreasing
/// the distance to the sinks. Among eligible edges the smallest target wins.
/// Edges are listed by decreasing distance of their origin, then by origin.
pub fn construct_exit_edges(model: &NetworkModel) -> Result<Vec<Edge>> {
    let (_, b) = check_assumptions(model);
    if !b.passed {
        return Err(Error::NoConstruction(format!("graph assumptions fail: {}", b.reasons.join("; "))));
    }
    let d = distances_to_sinks(model);
    let succ = model.active_successors();
    let mut origins: Vec<usize> = (0..model.n()).filter(|&l| model.class(l) != PatchClass::Sink).collect();
    origins.sort_by(|&a, &b| d[b].cmp(&d[a]).then(a.cmp(&b)));
    origins
        .into_iter()
        .map(|l| {
            succ[l]
                .iter()
                .copied()
                .filter(|&j| d[j] < d[l])
                .min()
                .map(|j| Edge::new(l, j))
                .ok_or_else(|| Error::NoConstruction(format!("patch {} has no edge towards the sinks", l + 1)))
        })
        .collect()
}

/// Shortest path from `from` to `to` with at least one edge; BFS visits
/// successors in index order, so ties go to smaller indices.
fn shortest_path(succ: &[Vec<usize>], from: usize, to: usize) -> Option<Vec<Edge>> {
    let n = succ.len();
    let mut parent = vec![usize::MAX; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    let mut sorted: Vec<Vec<usize>> = succ.to_vec();
    for s in &mut sorted {
        s.sort_unstable();
    }
    for &v in &sorted[from] {
        if !seen[v] {
            seen[v] = true;
            parent[v] = from;
            queue.push_back(v);
        }
    }
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for &v in &sorted[u] {
            if !seen[v] {
                seen[v] = true;
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    if !seen[to] {
        return None;
    }
    let mut path = Vec::new();
    let mut v = to;
    loop {
        let u = parent[v];
        path.push(Edge::new(u, v));
        if u == from {
            break;
        }
        v = u;
    }
    path.reverse();
    Some(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SinkCycle {
    Found(Vec<Edge>),
    Absent(String),
}

/// Closed walk through every sink, chaining shortest paths between
/// consecutive sinks (in index order) and back to the first.
pub fn construct_sink_cycle(model: &NetworkModel) -> SinkCycle {
    let sinks = model.sinks();
    if sinks.is_empty() {
        return SinkCycle::Absent("the model has no sinks".into());
    }
    let succ = model.active_successors();
    let mut walk = Vec::new();
    for k in 0..sinks.len() {
        let from = sinks[k];
        let to = sinks[(k + 1) % sinks.len()];
        match shortest_path(&succ, from, to) {
            Some(p) => walk.extend(p),
            None => {
                return SinkCycle::Absent(format!("no path from sink {} to sink {}", from + 1, to + 1));
            }
        }
    }
    SinkCycle::Found(walk)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Multiplicative,
    Unitary,
    Other,
}

/// Growth order of a coercive rate profile.
fn rate_order(rate: &RateSpec) -> Option<f64> {
    match *rate {
        RateSpec::PowerLaw { exponent } => Some(exponent),
        RateSpec::Coercive { theta, .. } => Some(theta.exponent),
        RateSpec::CarryingCapacity { .. } => Some(1.0),
        _ => None,
    }
}

/// Family membership beyond the structural assumptions, with the reason
/// when neither applies.
pub fn detect_family(model: &NetworkModel) -> (Family, String) {
    let edges = model.transfer_edges();
    if edges.iter().all(|&e| model.rate(e).is_state_free() && model.amplitude(e).is_relative()) {
        return (Family::Multiplicative, "constant rates with relative transfer laws".into());
    }
    let orders: Option<Vec<f64>> = edges.iter().map(|&e| rate_order(model.rate(e))).collect();
    let unit = model
        .active_edges()
        .iter()
        .all(|&e| matches!(model.amplitude(e), crate::model::AmplitudeLaw::UnitDirac));
    match orders {
        Some(o) if unit && !o.is_empty() => {
            let first = o[0];
            if o.iter().all(|&v| (v - first).abs() < 1e-12 && v > 0.0 && v <= 1.0) {
                (Family::Unitary, "coercive rates of one growth order with unit transfers".into())
            } else {
                (Family::Other, "coercive rates do not share one subadditive growth order".into())
            }
        }
        _ => (Family::Other, "rates and transfer laws match neither family".into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub model: String,
    pub assumption_a: CheckReport,
    pub assumption_b: CheckReport,
    pub family: Family,
    pub family_reason: String,
    pub traffic_sum: Option<f64>,
    /// Closed-form `lim sum phi` as every coordinate grows.
    pub growth_limit: f64,
    /// Closed-form `limsup sum phi` as sink coordinates grow.
    pub sink_growth_limit: f64,
    /// Probe-grid values `(R, sup sum phi)` over `{min_i x_i >= R}`.
    pub drift_probe: Vec<(f64, f64)>,
    pub strongly_connected: bool,
    pub weakly_connected: bool,
    pub classification: Verdict,
    pub cited_condition: String,
}

impl StabilityReport {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("model: {}\n", self.model));
        s.push_str(&format!("classification: {}\n", self.classification));
        s.push_str(&format!("condition: {}\n", self.cited_condition));
        s.push_str(&format!("family: {:?} ({})\n", self.family, self.family_reason));
        let check = |name: &str, r: &CheckReport| {
            if r.passed {
                format!("{name}: pass\n")
            } else {
                format!("{name}: fail ({})\n", r.reasons.join("; "))
            }
        };
        s.push_str(&check("growth assumptions", &self.assumption_a));
        s.push_str(&check("graph assumptions", &self.assumption_b));
        if let Some(t) = self.traffic_sum {
            s.push_str(&format!("sum of growth constants: {t}\n"));
        }
        s.push_str(&format!("growth limit (all large): {}\n", self.growth_limit));
        s.push_str(&format!("growth limit (sinks large): {}\n", self.sink_growth_limit));
        s.push_str(&format!(
            "strongly connected: {}, weakly connected: {}\n",
            self.strongly_connected, self.weakly_connected
        ));
        s
    }
}

const PROBE_LEVELS: [f64; 4] = [10.0, 100.0, 1e3, 1e4];

pub fn classify(model: &NetworkModel) -> StabilityReport {
    let (a, b) = check_assumptions(model);
    let (family, family_reason) = detect_family(model);
    let traffic = traffic_condition(model).ok();
    let growth_limit = growth_limit_all(model);
    let sink_growth_limit = growth_limit_sinks(model);
    let all: Vec<usize> = (0..model.n()).collect();
    let drift_probe = drift_limit_probe(model, &all, &PROBE_LEVELS).unwrap_or_default();
    let strong = strongly_connected(model);
    let weak = weakly_connected(model);

    let (classification, cited) = if !a.passed || !b.passed {
        let which = match (a.passed, b.passed) {
            (false, false) => "growth and graph assumptions fail",
            (false, true) => "growth assumptions fail",
            _ => "graph assumptions fail",
        };
        (Verdict::Unknown, format!("{which}; no stability result applies"))
    } else if family == Family::Other {
        (Verdict::Unknown, format!("outside both model families: {family_reason}"))
    } else if let Some((sum, verdict)) = traffic {
        let text = if verdict == Verdict::Ergodic {
            format!("traffic condition: sum of growth constants {sum} < 0")
        } else {
            format!("traffic condition fails: sum of growth constants {sum} >= 0, so the process is transient")
        };
        (verdict, text)
    } else if family == Family::Multiplicative {
        if growth_limit < 0.0 {
            (
                Verdict::Ergodic,
                format!("multiplicative model with limsup of total growth {growth_limit} < 0 as all populations grow"),
            )
        } else {
            (Verdict::Unknown, format!("limsup of total growth {growth_limit} is not negative"))
        }
    } else if sink_growth_limit < 0.0 {
        (
            Verdict::Ergodic,
            format!("unitary model with limsup of total growth {sink_growth_limit} < 0 as sink populations grow"),
        )
    } else if weak && growth_limit < 0.0 {
        (
            Verdict::Ergodic,
            format!("unitary model on a weakly connected graph with limsup of total growth {growth_limit} < 0 as all populations grow"),
        )
    } else {
        (
            Verdict::Unknown,
            format!(
                "unitary drift conditions not met (sink limit {sink_growth_limit}, full limit {growth_limit}, weakly connected {weak})"
            ),
        )
    };

    StabilityReport {
        model: model.name().to_string(),
        assumption_a: a,
        assumption_b: b,
        family,
        family_reason,
        traffic_sum: traffic.map(|t| t.0),
        growth_limit,
        sink_growth_limit,
        drift_probe,
        strongly_connected: strong,
        weakly_connected: weak,
        classification,
        cited_condition: cited,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assumption2Params {
    /// Region where total growth is at most `-c`.
    pub s: Region,
    /// Target region, contained in `s`.
    pub s_prime: Region,
    pub t: f64,
    pub t_prime: f64,
    pub r: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Overrides the closed-form decay constant.
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assumption2Estimate {
    pub delta: f64,
    pub delta_ci: (f64, f64),
    pub delta_trials: usize,
    /// No starting state could be drawn outside `S` with enough population.
    pub delta_vacuous: bool,
    pub epsilon: f64,
    pub epsilon_ci: (f64, f64),
    pub epsilon_trials: usize,
    pub epsilon_vacuous: bool,
    pub c: f64,
    pub growth_sup: f64,
    /// `epsilon * T' * c`.
    pub lhs: f64,
    /// `(1 - epsilon) * (T / delta) * sup sum phi`.
    pub rhs: f64,
    pub holds: bool,
}

const MAX_ATTEMPTS: usize = 100_000;

fn region_scale(region: &Region) -> f64 {
    region
        .atoms
        .iter()
        .map(|a| match a {
            Atom::MinAtLeast { level, .. } | Atom::TotalAtLeast { level } => *level,
            _ => 0.0,
        })
        .fold(0.0, f64::max)
}

/// Draws a state uniformly from the box `[0, side]^n` conditioned on
/// `accept`, or `None` after too many attempts.
fn draw_state(n: usize, side: f64, rng: &mut rng::Rng, accept: impl Fn(&[f64]) -> bool) -> Option<Vec<f64>> {
    let mut x = vec![0.0; n];
    for _ in 0..MAX_ATTEMPTS {
        for v in x.iter_mut() {
            *v = side * rand::Rng::random::<f64>(rng);
        }
        if accept(&x) {
            return Some(x);
        }
    }
    None
}

struct RegionWatch<'a> {
    model: &'a NetworkModel,
    region: &'a Region,
    first_inside: Option<f64>,
    first_outside: Option<f64>,
}

impl Observer for RegionWatch<'_> {
    fn segment(&mut self, t: f64, x: &[f64], dt: f64) {
        if self.first_inside.is_some() && self.first_outside.is_some() {
            return;
        }
        let p = self.region.segment_profile(self.model, x, dt);
        if self.first_inside.is_none() {
            self.first_inside = p.first_inside.map(|s| t + s);
        }
        if self.first_outside.is_none() {
            self.first_outside = p.first_outside.map(|s| t + s);
        }
    }
    fn event(&mut self, event: &Event, x_post: &[f64]) {
        let inside = self.region.contains(x_post);
        if inside && self.first_inside.is_none() {
            self.first_inside = Some(event.t);
        }
        if !inside && self.first_outside.is_none() {
            self.first_outside = Some(event.t);
        }
    }
}

/// Monte Carlo estimates of the hitting probability `delta` of `S'` within
/// `T` from large states outside `S`, and of the probability `epsilon` of
/// staying in `S` through `T'` from large states in `S'`.
///
/// Starting states are drawn uniformly from a box large enough to contain
/// every region threshold, conditioned on the relevant constraints.
pub fn estimate_assumption2(model: &NetworkModel, p: &Assumption2Params) -> Result<Assumption2Estimate> {
    if p.replicas == 0 {
        return Err(Error::Contract("replicas must be at least one".into()));
    }
    if !(p.t > 0.0 && p.t_prime > 0.0 && p.r >= 0.0) {
        return Err(Error::Contract("T and T' must be positive and R nonnegative".into()));
    }
    for region in [&p.s, &p.s_prime] {
        if region.max_patch().is_some_and(|i| i >= model.n()) {
            return Err(Error::Contract("region refers to a missing patch".into()));
        }
    }
    let n = model.n();
    let side = 4.0 * p.r.max(region_scale(&p.s)).max(region_scale(&p.s_prime)).max(1.0);
    let big = |x: &[f64]| x.iter().sum::<f64>() >= p.r;

    let delta_runs: Vec<Result<Option<bool>>> = rng::replicas(p.seed, p.replicas, |_, rng| {
        let Some(x0) = draw_state(n, side, rng, |x| big(x) && !p.s.contains(x)) else {
            return Ok(None);
        };
        let mut watch = RegionWatch { model, region: &p.s_prime, first_inside: None, first_outside: None };
        sim::run(model, &x0, p.t, rng, &mut watch)?;
        Ok(Some(watch.first_inside.is_some_and(|t| t <= p.t)))
    });
    let epsilon_runs: Vec<Result<Option<bool>>> =
        rng::replicas(p.seed, p.replicas, |r, _| {
            let mut rng = rng::stream(p.seed, p.replicas as u64 + r);
            let Some(x0) = draw_state(n, side, &mut rng, |x| big(x) && p.s_prime.contains(x)) else {
                return Ok(None);
            };
            let mut watch = RegionWatch { model, region: &p.s, first_inside: None, first_outside: None };
            sim::run(model, &x0, p.t_prime, &mut rng, &mut watch)?;
            Ok(Some(watch.first_outside.is_none_or(|t| t >= p.t_prime)))
        });

    let tally = |runs: Vec<Result<Option<bool>>>| -> Result<(usize, usize)> {
        let mut hits = 0;
        let mut trials = 0;
        for r in runs {
            if let Some(h) = r? {
                trials += 1;
                hits += h as usize;
            }
        }
        Ok((hits, trials))
    };
    let (d_hits, d_trials) = tally(delta_runs)?;
    let (e_hits, e_trials) = tally(epsilon_runs)?;
    let delta_vacuous = d_trials == 0;
    let epsilon_vacuous = e_trials == 0;
    let delta = if delta_vacuous { 1.0 } else { d_hits as f64 / d_trials as f64 };
    let epsilon = if epsilon_vacuous { 1.0 } else { e_hits as f64 / e_trials as f64 };
    let delta_ci = if delta_vacuous { (1.0, 1.0) } else { stats::wilson(d_hits, d_trials, 0.95) };
    let epsilon_ci = if epsilon_vacuous { (1.0, 1.0) } else { stats::wilson(e_hits, e_trials, 0.95) };

    let c = p.c.unwrap_or_else(|| -region_growth_sup(model, &p.s));
    let growth_sup = global_growth_sup(model);
    let lhs = epsilon * p.t_prime * c;
    let rhs = if delta > 0.0 { (1.0 - epsilon) * (p.t / delta) * growth_sup } else { f64::INFINITY };
    let holds = c > 0.0 && delta > 0.0 && lhs > rhs;
    Ok(Assumption2Estimate {
        delta,
        delta_ci,
        delta_trials: d_trials,
        delta_vacuous,
        epsilon,
        epsilon_ci,
        epsilon_trials: e_trials,
        epsilon_vacuous,
        c,
        growth_sup,
        lhs,
        rhs,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AmplitudeLaw, RateSpec};

    fn graph(classes: &[PatchClass], c: &[f64], edges: &[(usize, usize)]) -> NetworkModel {
        let mut b = NetworkModel::builder("g");
        for (&cl, &ci) in classes.iter().zip(c) {
            b = b.patch(cl, GrowthSpec::constant(ci));
        }
        for &(i, j) in edges {
            b = b.edge(Edge::one_based(i, j), RateSpec::Constant { rate: 1.0 }, AmplitudeLaw::UniformFraction);
        }
        b.build().unwrap()
    }

    use PatchClass::{Neutral as N, Sink as K, Source as S};

    fn tree() -> NetworkModel {
        graph(
            &[S, S, N, N, K, K],
            &[1.0, 1.0, 0.0, 0.0, -2.0, -2.0],
            &[(2, 1), (3, 1), (4, 1), (1, 5), (2, 3), (1, 4), (5, 6), (6, 5)],
        )
    }

    #[test]
    fn exit_edges_on_the_tree() {
        let m = tree();
        let (a, b) = check_assumptions(&m);
        assert!(a.passed && b.passed, "{a:?} {b:?}");
        let k = construct_exit_edges(&m).unwrap();
        let want: Vec<Edge> = [(2, 1), (3, 1), (4, 1), (1, 5)].iter().map(|&(i, j)| Edge::one_based(i, j)).collect();
        assert_eq!(k, want);
    }

    #[test]
    fn exit_edges_on_the_connected_pairs() {
        let m = graph(&[S, S, K, K], &[1.0, 2.0, -2.5, -1.5], &[(1, 3), (2, 4), (3, 4), (4, 3), (3, 1), (4, 2)]);
        let k = construct_exit_edges(&m).unwrap();
        assert_eq!(k, vec![Edge::one_based(1, 3), Edge::one_based(2, 4)]);
    }

    #[test]
    fn trapped_pair_fails_graph_assumptions() {
        let m = graph(&[S, S, K, K], &[1.0, 2.0, -2.5, -1.5], &[(1, 3), (3, 1), (3, 2), (2, 4), (4, 2)]);
        let (_, b) = check_assumptions(&m);
        assert!(!b.passed);
        assert!(matches!(construct_exit_edges(&m), Err(Error::NoConstruction(_))));
        assert_eq!(classify(&m).classification, Verdict::Unknown);
    }

    #[test]
    fn single_sink_passes_vacuously() {
        let m = graph(&[K], &[-1.0], &[]);
        let (a, b) = check_assumptions(&m);
        assert!(a.passed && b.passed);
    }

    #[test]
    fn star_picks_smallest_sink() {
        let m = graph(&[S, K, K, K], &[1.0, -1.0, -1.0, -1.0], &[(1, 4), (1, 2), (1, 3)]);
        let (_, b) = check_assumptions(&m);
        // leaves cannot reach each other
        assert!(!b.passed);
        let connected = graph(
            &[S, K, K, K],
            &[1.0, -1.0, -1.0, -1.0],
            &[(1, 4), (1, 2), (1, 3), (2, 1), (3, 1), (4, 1)],
        );
        assert_eq!(construct_exit_edges(&connected).unwrap(), vec![Edge::one_based(1, 2)]);
    }

    #[test]
    fn sink_cycles() {
        let m = tree();
        match construct_sink_cycle(&m) {
            SinkCycle::Found(w) => {
                assert_eq!(w, vec![Edge::one_based(5, 6), Edge::one_based(6, 5)]);
            }
            other => panic!("{other:?}"),
        }
        let single = graph(&[S, K], &[1.0, -2.0], &[(1, 2), (2, 1)]);
        assert_eq!(
            construct_sink_cycle(&single),
            SinkCycle::Found(vec![Edge::one_based(2, 1), Edge::one_based(1, 2)])
        );
        let split = graph(&[S, K, S, K], &[1.0, -2.0, 1.0, -2.0], &[(1, 2), (2, 1), (3, 4), (4, 3)]);
        assert!(matches!(construct_sink_cycle(&split), SinkCycle::Absent(_)));
    }

    #[test]
    fn traffic_examples() {
        let m = graph(&[S, K], &[1.0, -2.0], &[(1, 2), (2, 1)]);
        assert_eq!(traffic_condition(&m).unwrap(), (-1.0, Verdict::Ergodic));
        let m = graph(&[S, K], &[1.0, -1.0], &[(1, 2), (2, 1)]);
        assert_eq!(traffic_condition(&m).unwrap(), (0.0, Verdict::Transient));
        let m = graph(&[N, N], &[0.0, 0.0], &[(1, 2), (2, 1)]);
        assert!(matches!(traffic_condition(&m), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn drift_probe_examples() {
        let m = graph(&[S, K], &[1.0, -2.0], &[(1, 2), (2, 1)]);
        let p = drift_limit_probe(&m, &[0, 1], &[1.0, 10.0]).unwrap();
        assert_eq!(p, vec![(1.0, -1.0), (10.0, -1.0)]);
        let src = graph(&[S, K], &[1.0, -2.0], &[(1, 2), (2, 1)]);
        let p = drift_limit_probe(&src, &[0], &[5.0]).unwrap();
        assert_eq!(p, vec![(5.0, 1.0)]);
        assert!(drift_limit_probe(&m, &[0], &[2.0, 1.0]).is_err());
    }

    #[test]
    fn classification_of_constant_models() {
        let ergodic = graph(&[S, K], &[1.0, -2.0], &[(1, 2), (2, 1)]);
        let r = classify(&ergodic);
        assert_eq!(r.classification, Verdict::Ergodic);
        assert!(r.cited_condition.contains("traffic"));
        let transient = graph(&[S, K], &[1.0, -1.0], &[(1, 2), (2, 1)]);
        assert_eq!(classify(&transient).classification, Verdict::Transient);
    }

    #[test]
    fn assumption2_trivial_cases() {
        let m = graph(&[S, K], &[1.0, -2.0], &[(1, 2), (2, 1)]);
        let p = Assumption2Params {
            s: Region::everything(),
            s_prime: Region::everything(),
            t: 1.0,
            t_prime: 1.0,
            r: 1.0,
            replicas: 20,
            seed: 1,
            c: Some(1.0),
        };
        let e = estimate_assumption2(&m, &p).unwrap();
        assert_eq!(e.delta, 1.0);
        assert!(e.delta_vacuous);
        assert_eq!(e.epsilon, 1.0);

        let frozen = NetworkModel::builder("frozen")
            .patch(N, GrowthSpec::constant(0.0))
            .patch(N, GrowthSpec::constant(0.0))
            .build()
            .unwrap();
        let p = Assumption2Params {
            s: Region::all(vec![Atom::MinAtLeast { patches: vec![0], level: 1.0 }]),
            s_prime: Region::all(vec![Atom::MinAtLeast { patches: vec![0], level: 2.0 }]),
            t: 5.0,
            t_prime: 5.0,
            r: 1.0,
            replicas: 50,
            seed: 2,
            c: Some(1.0),
        };
        let e = estimate_assumption2(&frozen, &p).unwrap();
        assert_eq!(e.delta, 0.0);
        assert!(!e.holds);
        assert_eq!(e.epsilon, 1.0);
    }
}
