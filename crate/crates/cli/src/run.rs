//! Experiment runners. Every runner computes its whole output in memory;
//! files are written only after it returns.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use metapop::analysis::{
    beta_diagnostic, f_moment, gamma_rate, hitting_check, martingale_check, occupancy, occupancy_estimate,
    endpoint_fraction, stationary_residuals, GammaRate,
};
use metapop::io::{self, Format};
use metapop::model::validate_model;
use metapop::sim::{self, Trajectory};
use metapop::stability::{classify, estimate_assumption2, Assumption2Params};
use metapop::NetworkModel;

use crate::error::CliError;
use crate::scenario::{region_of, Experiment, Resolved};

/// Everything one run writes.
pub struct Output {
    pub text: String,
    pub json: Value,
    pub files: Vec<(String, String)>,
}

impl Output {
    fn new(text: String, json: Value) -> Self {
        Output { text, json, files: Vec::new() }
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(CliError::runtime)
}

fn header(r: &Resolved) -> String {
    let s = &r.scenario;
    let mut t = String::new();
    let name = r.model.as_ref().map_or("-", |m| m.name());
    let _ = writeln!(t, "experiment: {}", experiment_name(s.experiment));
    let _ = writeln!(t, "model: {name}");
    if let Some(seed) = s.seed {
        let _ = writeln!(t, "seed: {seed}");
    }
    if let Some(n) = s.replicas {
        let _ = writeln!(t, "replicas: {n}");
    }
    if let Some(te) = s.t_end {
        let _ = writeln!(t, "t-end: {te}");
    }
    t
}

pub fn experiment_name(e: Experiment) -> &'static str {
    match e {
        Experiment::Simulate => "simulate",
        Experiment::Classify => "classify",
        Experiment::Occupancy => "occupancy",
        Experiment::Stationary => "stationary",
        Experiment::DriftWalk => "drift-walk",
        Experiment::Beta => "beta",
        Experiment::Assumption2 => "assumption2",
    }
}

fn model(r: &Resolved) -> &NetworkModel {
    r.model.as_ref().expect("checked during resolution")
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn run(r: &Resolved) -> Result<Output, CliError> {
    let mut out = match r.scenario.experiment {
        Experiment::Simulate => simulate(r)?,
        Experiment::Classify => classify_run(r)?,
        Experiment::Occupancy => occupancy_run(r)?,
        Experiment::Stationary => stationary(r)?,
        Experiment::DriftWalk => drift(r)?,
        Experiment::Beta => beta(r)?,
        Experiment::Assumption2 => assumption2(r)?,
    };
    out.text = format!("{}{}", header(r), out.text);
    if let Value::Object(map) = &mut out.json {
        map.insert("experiment".into(), json!(experiment_name(r.scenario.experiment)));
        map.insert("seed".into(), json!(r.scenario.seed));
    }
    Ok(out)
}

fn simulate(r: &Resolved) -> Result<Output, CliError> {
    let s = &r.scenario;
    let m = model(r);
    let x0 = s.x0.as_deref().expect("checked");
    let trajs = sim::simulate_ensemble(m, x0, s.t_end(), s.seed(), s.replicas(), s.sample_step).map_err(CliError::runtime)?;
    let mut text = String::new();
    let mut rows = Vec::new();
    let mut samples = String::new();
    if s.sample_step.is_some() {
        samples.push_str("# replica t");
        for k in 1..=m.n() {
            let _ = write!(samples, " x{k}");
        }
        samples.push('\n');
    }
    let mut files = Vec::new();
    for tr in &trajs {
        let _ = writeln!(text, "replica {}: {} events, final state {}", tr.replica, tr.events.len(), fmt_vec(&tr.x_end));
        rows.push(json!({"replica": tr.replica, "events": tr.events.len(), "x_end": tr.x_end}));
        for sm in &tr.samples {
            let _ = write!(samples, "{} {}", tr.replica, sm.t);
            for v in &sm.x {
                let _ = write!(samples, " {v}");
            }
            samples.push('\n');
        }
        let name = if trajs.len() == 1 {
            format!("trajectory.{}", r.format.extension())
        } else {
            format!("trajectory-{}.{}", tr.replica, r.format.extension())
        };
        let body = match r.format {
            Format::Csv => io::trajectory_to_csv(m, tr),
            Format::Json => io::trajectory_to_json(tr).map_err(CliError::runtime)?,
        };
        files.push((name, body));
    }
    if s.sample_step.is_some() {
        files.push(("samples.dat".into(), samples));
    }
    let mut o = Output::new(text, json!({"x0": x0, "replicas": rows}));
    o.files = files;
    Ok(o)
}

fn classify_run(r: &Resolved) -> Result<Output, CliError> {
    let m = model(r);
    let report = classify(m);
    let validation = validate_model(m);
    // the header already names the model
    let mut text: String = report.summary().lines().skip(1).map(|l| format!("{l}\n")).collect();
    if validation.is_valid() {
        text.push_str("structural validation: pass\n");
    } else {
        for v in &validation.violations {
            let _ = writeln!(text, "structural violation: {v}");
        }
    }
    Ok(Output::new(text, json!({"stability": to_value(&report)?, "validation": to_value(&validation)?})))
}

fn load_trajectories(r: &Resolved) -> Result<Vec<Trajectory>, CliError> {
    let n = model(r).n();
    r.scenario
        .trajectories
        .iter()
        .map(|p| {
            let path = if p.is_absolute() { p.clone() } else { r.base.join(p) };
            let tr = io::read_trajectory(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if tr.x0.x.len() != n {
                return Err(CliError::Config(format!("{} has {} patches, the model has {n}", path.display(), tr.x0.x.len())));
            }
            Ok(tr)
        })
        .collect()
}

fn occupancy_run(r: &Resolved) -> Result<Output, CliError> {
    let s = &r.scenario;
    let m = model(r);
    let mut text = String::new();
    let mut rows = Vec::new();
    if !s.trajectories.is_empty() {
        let trajs = load_trajectories(r)?;
        for (name, region) in &r.regions {
            let vals: Vec<f64> = trajs.iter().map(|t| occupancy(m, t, region)).collect::<Result<_, _>>().map_err(CliError::runtime)?;
            let _ = writeln!(text, "region {name}: time occupancy per path {}", fmt_vec(&vals));
            rows.push(json!({"region": name, "time_occupancy": vals}));
        }
        return Ok(Output::new(text, json!({"source": "files", "regions": rows})));
    }
    let x0 = s.x0.as_deref().expect("checked");
    let length = s.path_length.unwrap_or(s.t_end());
    for (name, region) in &r.regions {
        let occ = occupancy_estimate(m, x0, length, s.seed(), region).map_err(CliError::runtime)?;
        let (frac, ci) = endpoint_fraction(m, x0, s.t_end(), s.replicas(), s.seed(), region).map_err(CliError::runtime)?;
        let _ = writeln!(
            text,
            "region {name}: time occupancy {} +/- {} over one path of length {length}; endpoint fraction {frac} in [{}, {}]",
            occ.value, occ.half_width, ci.0, ci.1
        );
        rows.push(json!({
            "region": name,
            "time_occupancy": occ,
            "path_length": length,
            "endpoint_fraction": frac,
            "endpoint_interval": [ci.0, ci.1],
        }));
    }
    Ok(Output::new(text, json!({"source": "simulation", "regions": rows})))
}

fn stationary(r: &Resolved) -> Result<Output, CliError> {
    let s = &r.scenario;
    let m = model(r);
    let trajs = if s.trajectories.is_empty() {
        let x0 = s.x0.as_deref().expect("checked");
        sim::simulate_ensemble(m, x0, s.t_end(), s.seed(), s.replicas(), None).map_err(CliError::runtime)?
    } else {
        load_trajectories(r)?
    };
    let report = stationary_residuals(m, &trajs, &r.functions).map_err(CliError::runtime)?;
    let mut text = String::new();
    let _ = writeln!(text, "classification: {}", report.classification);
    if let Some(w) = &report.warning {
        let _ = writeln!(text, "warning: {w}");
    }
    let _ = writeln!(text, "paths: {}, averaged span per path: {}, burn-in fraction: {}", report.paths, report.span, report.burn_in);
    for (i, (mean, res)) in report.patch_means.iter().zip(&report.patch_residuals).enumerate() {
        let _ = writeln!(
            text,
            "patch {}: mean {} +/- {}, balance residual {} +/- {}",
            i + 1,
            mean.value,
            mean.half_width,
            res.value,
            res.half_width
        );
    }
    for (name, e) in &report.function_residuals {
        let _ = writeln!(text, "generator average of {name}: {} +/- {}", e.value, e.half_width);
    }
    let _ = writeln!(text, "residuals vanish within 3 half-widths: {}", report.residuals_vanish(3.0));
    let mut moments = Vec::new();
    if let Some(eta) = s.eta {
        for tr in &trajs {
            let fm = f_moment(m, tr, eta).map_err(CliError::runtime)?;
            let _ = writeln!(text, "replica {}: log mean of exp({eta} sqrt(total)) = {}", tr.replica, fm.log_value);
            moments.push(to_value(&fm)?);
        }
    }
    Ok(Output::new(text, json!({"report": to_value(&report)?, "f_moments": moments})))
}

fn drift(r: &Resolved) -> Result<Output, CliError> {
    let s = &r.scenario;
    let d = s.drift.as_ref().expect("checked");
    let p = s.drift_params().expect("checked");
    p.check().map_err(|e| CliError::Config(e.to_string()))?;
    let mut text = String::new();
    let gamma = gamma_rate(d.r, &p).map_err(CliError::runtime)?;
    match &gamma {
        GammaRate::Value { gamma, warning } => {
            let _ = writeln!(text, "gamma({}) = {gamma}", d.r);
            if let Some(w) = warning {
                let _ = writeln!(text, "warning: {w}");
            }
        }
        GammaRate::OutOfDomain { bound } => {
            let _ = writeln!(text, "r = {} is outside the domain r < {bound}", d.r);
        }
    }
    let mut json = json!({"params": to_value(&p)?, "r": d.r, "gamma": to_value(&gamma)?});
    let mut files = Vec::new();
    if gamma.value().is_some_and(|g| g > 0.0) {
        let mr = martingale_check(&p, d.r, d.y0, s.replicas(), d.steps, s.seed()).map_err(CliError::runtime)?;
        let _ = writeln!(
            text,
            "martingale: target {}, slope {} (se {}, z {}), flat at z < 3: {}",
            mr.target,
            mr.slope,
            mr.slope_se,
            mr.slope_z,
            mr.is_flat(3.0)
        );
        let _ = writeln!(
            text,
            "mean increment {} +/- {} (theory {})",
            mr.mean_increment.value, mr.mean_increment.half_width, mr.mean_increment_theory
        );
        let mut dat = String::from("# k mean half-width\n");
        for (k, e) in mr.means.iter().enumerate() {
            let _ = writeln!(dat, "{} {} {}", k + 1, e.value, e.half_width);
        }
        files.push(("martingale_means.dat".to_string(), dat));
        json["martingale"] = to_value(&mr)?;
        if let Some(level) = d.level {
            let h = hitting_check(&p, d.r, d.y0, level, s.replicas(), d.max_steps, s.seed()).map_err(CliError::runtime)?;
            let _ = writeln!(
                text,
                "hitting level {level}: E exp(gamma (sigma - 1)) = {} +/- {} vs bound {} ({}); E exp(gamma sigma) = {} vs {} ({}); censored {}",
                h.shifted_moment.value,
                h.shifted_moment.half_width,
                h.shifted_bound,
                if h.holds { "holds" } else { "fails" },
                h.moment.value,
                h.displayed_bound,
                if h.displayed_holds { "holds" } else { "fails" },
                h.censored
            );
            json["hitting"] = to_value(&h)?;
        }
    } else {
        text.push_str("martingale check skipped: gamma is not positive\n");
    }
    let mut o = Output::new(text, json);
    o.files = files;
    Ok(o)
}

const HISTOGRAM_BINS: usize = 20;

fn beta(r: &Resolved) -> Result<Output, CliError> {
    let s = &r.scenario;
    let m = model(r);
    let x0 = s.x0.as_deref().expect("checked");
    let b = beta_diagnostic(m, x0, s.t_end(), s.replicas(), s.seed()).map_err(CliError::runtime)?;
    let mut text = String::new();
    let _ = writeln!(text, "share mean {} +/- {}, variance {}", b.sample_mean.value, b.sample_mean.half_width, b.sample_variance);
    if let Some((a, bb)) = b.fitted {
        let _ = writeln!(text, "fitted beta({a}, {bb})");
    }
    if let Some(ratio) = b.ratio {
        let _ = writeln!(text, "alpha/beta = {} +/- {} (expected {}): {}", ratio.value, ratio.half_width, b.expected_ratio, b.ratio_ok);
    }
    if let Some(ks) = b.ks {
        let _ = writeln!(text, "KS statistic {ks} vs critical {}: {}", b.ks_critical, b.ks_ok);
    }
    if let Some(f) = &b.failure {
        let _ = writeln!(text, "no fit: {f}");
    }
    let _ = writeln!(text, "passed: {}", b.passed());

    let mut counts = [0usize; HISTOGRAM_BINS];
    for &v in &b.shares {
        let k = ((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        counts[k] += 1;
    }
    let width = 1.0 / HISTOGRAM_BINS as f64;
    let mut dat = String::from("# lo hi count density\n");
    for (k, c) in counts.iter().enumerate() {
        let density = *c as f64 / (b.shares.len() as f64 * width);
        let _ = writeln!(dat, "{} {} {c} {density}", k as f64 * width, (k + 1) as f64 * width);
    }
    let mut o = Output::new(text, json!({"beta": to_value(&b)?}));
    o.files.push(("beta_histogram.dat".into(), dat));
    Ok(o)
}

fn assumption2(r: &Resolved) -> Result<Output, CliError> {
    let s = &r.scenario;
    let m = model(r);
    let a = s.assumption2.as_ref().expect("checked");
    let p = Assumption2Params {
        s: region_of(&a.s, m.n())?,
        s_prime: region_of(&a.s_prime, m.n())?,
        t: a.t,
        t_prime: a.t_prime,
        r: a.r,
        replicas: s.replicas(),
        seed: s.seed(),
        c: a.c,
    };
    let e = estimate_assumption2(m, &p).map_err(CliError::runtime)?;
    let mut text = String::new();
    let _ = writeln!(
        text,
        "delta {} in [{}, {}] over {} trials{}",
        e.delta,
        e.delta_ci.0,
        e.delta_ci.1,
        e.delta_trials,
        if e.delta_vacuous { " (vacuous)" } else { "" }
    );
    let _ = writeln!(
        text,
        "epsilon {} in [{}, {}] over {} trials{}",
        e.epsilon,
        e.epsilon_ci.0,
        e.epsilon_ci.1,
        e.epsilon_trials,
        if e.epsilon_vacuous { " (vacuous)" } else { "" }
    );
    let _ = writeln!(text, "decay constant c {}, growth sup {}", e.c, e.growth_sup);
    let _ = writeln!(text, "lhs {} vs rhs {}: {}", e.lhs, e.rhs, if e.holds { "holds" } else { "fails" });
    Ok(Output::new(text, json!({"params": to_value(&p)?, "estimate": to_value(&e)?})))
}

/// Creates the output directory and writes every file.
pub fn write(out: &Output, dir: &Path) -> Result<Vec<String>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    let json = serde_json::to_string_pretty(&out.json).map_err(CliError::runtime)? + "\n";
    let mut all = vec![("report.txt".to_string(), out.text.clone()), ("report.json".to_string(), json)];
    all.extend(out.files.iter().cloned());
    let mut names = Vec::new();
    for (name, body) in &all {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display())))?;
        names.push(name.clone());
    }
    Ok(names)
}
