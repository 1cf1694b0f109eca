//! Scenario files: one experiment on one model.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use metapop::analysis::{DriftWalkParams, TestFunction};
use metapop::builtin::list_builtin_models;
use metapop::config::{check_version, ModelDesc};
use metapop::io::Format;
use metapop::{Atom, NetworkModel, Region};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Classify,
    Occupancy,
    Stationary,
    DriftWalk,
    Beta,
    Assumption2,
}

/// Region atom with one-based patch numbers.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AtomDesc {
    Positive { patch: usize },
    Empty { patch: usize },
    MinAtLeast { patches: Vec<usize>, level: f64 },
    TotalAtLeast { level: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionDesc {
    pub name: String,
    /// Conjunction of atoms; empty means the whole space.
    #[serde(default)]
    pub all: Vec<AtomDesc>,
    #[serde(default)]
    pub negated: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct DriftDesc {
    pub epsilon: f64,
    pub delta: f64,
    pub c_t_prime: f64,
    pub t_m: f64,
    pub r: f64,
    #[serde(default)]
    pub y0: f64,
    #[serde(default = "fifty")]
    pub steps: usize,
    /// Level of the hitting-time check; skipped when absent.
    pub level: Option<f64>,
    #[serde(default = "ten_thousand")]
    pub max_steps: usize,
}

fn fifty() -> usize {
    50
}

fn ten_thousand() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Assumption2Desc {
    pub s: RegionDesc,
    pub s_prime: RegionDesc,
    pub t: f64,
    pub t_prime: f64,
    pub r: f64,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Scenario {
    pub format_version: u32,
    pub experiment: Experiment,
    pub model: Option<ModelDesc>,
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub t_end: Option<f64>,
    pub x0: Option<Vec<f64>>,
    /// Grid step for sampled states written alongside trajectories.
    pub sample_step: Option<f64>,
    /// Length of the single path used by the time-occupancy estimator.
    pub path_length: Option<f64>,
    /// Existing trajectory files to analyse instead of simulating.
    #[serde(default)]
    pub trajectories: Vec<PathBuf>,
    #[serde(default)]
    pub regions: Vec<RegionDesc>,
    /// Test functions: `total`, `xK`, `xK^2`.
    #[serde(default)]
    pub functions: Vec<String>,
    /// Root-exponential moment parameter for `stationary`.
    pub eta: Option<f64>,
    pub drift: Option<DriftDesc>,
    pub assumption2: Option<Assumption2Desc>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    /// Run even when the model breaks the structural assumptions.
    #[serde(default)]
    pub allow_invalid: bool,
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub t_end: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

/// A scenario with its model built and every reference checked.
pub struct Resolved {
    pub scenario: Scenario,
    pub model: Option<NetworkModel>,
    pub regions: Vec<(String, Region)>,
    pub functions: Vec<TestFunction>,
    pub out: PathBuf,
    pub format: Format,
    /// Directory of the scenario file, for relative trajectory paths.
    pub base: PathBuf,
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn parse(text: &str) -> Result<Scenario, CliError> {
    let s: Scenario = toml::from_str(text).map_err(|e| config(e.to_string()))?;
    check_version(s.format_version).map_err(|e| config(e.to_string()))?;
    Ok(s)
}

fn region(desc: &RegionDesc, n: usize) -> Result<Region, CliError> {
    let patch = |p: usize| {
        if p == 0 || p > n {
            Err(config(format!("region {:?} refers to patch {p}, the model has {n}", desc.name)))
        } else {
            Ok(p - 1)
        }
    };
    let atoms = desc
        .all
        .iter()
        .map(|a| {
            Ok(match a {
                AtomDesc::Positive { patch: p } => Atom::Positive { patch: patch(*p)? },
                AtomDesc::Empty { patch: p } => Atom::Empty { patch: patch(*p)? },
                AtomDesc::MinAtLeast { patches, level } => Atom::MinAtLeast {
                    patches: patches.iter().map(|&p| patch(p)).collect::<Result<_, _>>()?,
                    level: *level,
                },
                AtomDesc::TotalAtLeast { level } => Atom::TotalAtLeast { level: *level },
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let r = Region::all(atoms);
    Ok(if desc.negated { r.not() } else { r })
}

pub fn region_of(desc: &RegionDesc, n: usize) -> Result<Region, CliError> {
    region(desc, n)
}

fn function(name: &str, n: usize) -> Result<TestFunction, CliError> {
    let name = name.trim();
    if name == "total" {
        return Ok(TestFunction::Total);
    }
    let (body, square) = match name.strip_suffix("^2") {
        Some(b) => (b, true),
        None => (name, false),
    };
    let k: usize = body
        .strip_prefix('x')
        .and_then(|k| k.parse().ok())
        .filter(|&k| k >= 1 && k <= n)
        .ok_or_else(|| config(format!("unknown test function {name:?} (use total, xK or xK^2 with 1 <= K <= {n})")))?;
    Ok(if square { TestFunction::Square(k - 1) } else { TestFunction::Coordinate(k - 1) })
}

impl Scenario {
    pub fn drift_params(&self) -> Option<DriftWalkParams> {
        self.drift.as_ref().map(|d| DriftWalkParams {
            epsilon: d.epsilon,
            delta: d.delta,
            c_t_prime: d.c_t_prime,
            t_m: d.t_m,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("checked during resolution")
    }

    pub fn replicas(&self) -> usize {
        self.replicas.expect("checked during resolution")
    }

    pub fn t_end(&self) -> f64 {
        self.t_end.expect("checked during resolution")
    }
}

/// Applies overrides, builds the model and checks every field the
/// experiment needs. Nothing is written.
pub fn resolve(mut s: Scenario, overrides: &Overrides, scenario_path: &Path) -> Result<Resolved, CliError> {
    if overrides.seed.is_some() {
        s.seed = overrides.seed;
    }
    if overrides.replicas.is_some() {
        s.replicas = overrides.replicas;
    }
    if overrides.t_end.is_some() {
        s.t_end = overrides.t_end;
    }
    let out = overrides
        .out
        .clone()
        .or_else(|| s.output.clone())
        .ok_or_else(|| config("no output directory: set `output`, --out or METAPOP_OUT"))?;
    let format = overrides.format.or(s.format).unwrap_or(Format::Csv);
    let base = scenario_path.parent().map(Path::to_path_buf).unwrap_or_default();

    use Experiment::*;
    let needs_model = s.experiment != DriftWalk;
    let from_files = !s.trajectories.is_empty();
    let stochastic = s.experiment != Classify && !(matches!(s.experiment, Occupancy | Stationary) && from_files);
    if stochastic && s.seed.is_none() {
        return Err(config("seed is required for this experiment"));
    }
    let needs_replicas = matches!(s.experiment, Simulate | DriftWalk | Beta | Assumption2)
        || (matches!(s.experiment, Occupancy | Stationary) && !from_files);
    if needs_replicas && s.replicas.is_none() {
        return Err(config("replicas is required for this experiment"));
    }
    if s.replicas == Some(0) {
        return Err(config("replicas must be positive"));
    }
    let simulates = matches!(s.experiment, Simulate | Beta)
        || (matches!(s.experiment, Occupancy | Stationary) && !from_files);
    if simulates {
        match s.t_end {
            Some(t) if t > 0.0 && t.is_finite() => {}
            _ => return Err(config("t-end must be a positive number")),
        }
        if s.x0.is_none() {
            return Err(config("x0 is required for this experiment"));
        }
    }
    if s.experiment == DriftWalk && s.drift.is_none() {
        return Err(config("drift-walk needs a [drift] table"));
    }
    if s.experiment == Assumption2 && s.assumption2.is_none() {
        return Err(config("assumption2 needs an [assumption2] table"));
    }
    if s.experiment == Occupancy && s.regions.is_empty() {
        return Err(config("occupancy needs at least one region"));
    }
    if !s.trajectories.is_empty() && !matches!(s.experiment, Occupancy | Stationary) {
        return Err(config("trajectories are only read by occupancy and stationary"));
    }
    if let Some(step) = s.sample_step {
        if !(step > 0.0) {
            return Err(config("sample-step must be positive"));
        }
    }
    if let Some(len) = s.path_length {
        if !(len > 0.0 && len.is_finite()) {
            return Err(config("path-length must be a positive number"));
        }
    }

    if let Some(name) = s.model.as_ref().and_then(|m| m.builtin.as_deref()) {
        if !list_builtin_models().iter().any(|b| b.name == name) {
            return Err(config(format!("unknown built-in model {name:?}")));
        }
    }
    let model = match (&s.model, needs_model) {
        (Some(desc), _) => Some(desc.build().map_err(CliError::from_core)?),
        (None, true) => return Err(config("a [model] table is required")),
        (None, false) => None,
    };
    let mut regions = Vec::new();
    let mut functions = Vec::new();
    if let Some(m) = &model {
        let n = m.n();
        if let Some(x0) = &s.x0 {
            if x0.len() != n {
                return Err(config(format!("x0 has {} entries, the model has {n} patches", x0.len())));
            }
            if x0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(config("x0 entries must be finite and nonnegative"));
            }
        }
        for r in &s.regions {
            regions.push((r.name.clone(), region(r, n)?));
        }
        for f in &s.functions {
            functions.push(function(f, n)?);
        }
        if let Some(a) = &s.assumption2 {
            region(&a.s, n)?;
            region(&a.s_prime, n)?;
        }
        let report = metapop::model::validate_model(m);
        if !report.is_valid() && !s.allow_invalid {
            let lines: Vec<String> = report.violations.iter().map(|v| format!("{v}")).collect();
            return Err(CliError::Validation(format!("model breaks its assumptions:\n  {}", lines.join("\n  "))));
        }
    }
    Ok(Resolved { scenario: s, model, regions, functions, out, format, base })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
format-version = 1
experiment = "simulate"
seed = 1
replicas = 2
t-end = 10.0
x0 = [1.0, 1.0]
output = "out"

[model]
builtin = "constant-multiplicative"
"#;

    #[test]
    fn parses_and_resolves() {
        let r = resolve(parse(BASE).unwrap(), &Overrides::default(), Path::new("s.toml")).unwrap();
        assert_eq!(r.model.unwrap().n(), 2);
        assert_eq!(r.format, Format::Csv);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(parse(&BASE.replace("simulate", "simmer")), Err(CliError::Config(_))));
        assert!(matches!(parse(&format!("{BASE}\ncolour = 1\n")), Err(CliError::Config(_))));
        let no_seed = parse(&BASE.replace("seed = 1\n", "")).unwrap();
        assert!(matches!(resolve(no_seed, &Overrides::default(), Path::new("s")), Err(CliError::Config(_))));
        let short = parse(&BASE.replace("[1.0, 1.0]", "[1.0]")).unwrap();
        assert!(matches!(resolve(short, &Overrides::default(), Path::new("s")), Err(CliError::Config(_))));
    }

    #[test]
    fn functions_and_regions() {
        assert!(matches!(function("x2^2", 2).unwrap(), TestFunction::Square(1)));
        assert!(matches!(function("x1", 2).unwrap(), TestFunction::Coordinate(0)));
        assert!(function("x3", 2).is_err());
        let d = RegionDesc { name: "r".into(), all: vec![AtomDesc::Empty { patch: 2 }], negated: false };
        assert_eq!(region(&d, 2).unwrap(), Region::all(vec![Atom::Empty { patch: 1 }]));
        assert!(region(&d, 1).is_err());
    }

    #[test]
    fn validation_failures_are_distinct() {
        let text = BASE.replace("builtin = \"constant-multiplicative\"", "builtin = \"linear-relaxation\"");
        let r = resolve(parse(&text).unwrap(), &Overrides::default(), Path::new("s"));
        assert!(matches!(r, Err(CliError::Validation(_))));
        let text = text.replace("output = \"out\"", "output = \"out\"\nallow-invalid = true");
        assert!(resolve(parse(&text).unwrap(), &Overrides::default(), Path::new("s")).is_ok());
    }
}
