//! Named example models with adjustable parameters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AmplitudeLaw, Edge, GrowthSpec, NetworkModel, PatchClass, RateSpec, RelativeLaw};

/// A parameter value: one number or a list (one entry per patch).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Scalar(f64),
    List(Vec<f64>),
}

pub type Params = BTreeMap<String, Param>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSlot {
    pub name: &'static str,
    pub default: Param,
    pub meaning: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuiltinInfo {
    pub name: &'static str,
    pub summary: &'static str,
    pub slots: Vec<ParamSlot>,
}

fn slot(name: &'static str, default: Param, meaning: &'static str) -> ParamSlot {
    ParamSlot { name, default, meaning }
}

use Param::{List, Scalar};

/// Catalog of built-in models, in a stable order.
pub fn list_builtin_models() -> Vec<BuiltinInfo> {
    vec![
        BuiltinInfo {
            name: "constant-multiplicative",
            summary: "constant growth, constant rates on every ordered pair, uniform fraction of the origin moves",
            slots: vec![
                slot("growth", List(vec![1.0, -2.0]), "growth constant per patch; its sign sets the patch class"),
                slot("rate", Scalar(1.0), "transfer rate on every ordered pair"),
            ],
        },
        BuiltinInfo {
            name: "constant-unitary",
            summary: "constant growth, rates (1 v x_i)^alpha on every ordered pair, one unit (or all of x_i) moves",
            slots: vec![
                slot("growth", List(vec![1.0, -2.0]), "growth constant per patch; its sign sets the patch class"),
                slot("alpha", Scalar(1.0), "rate exponent in (0, 1]"),
            ],
        },
        BuiltinInfo {
            name: "logistic-unitary",
            summary: "logistic sources feeding saturating sinks at rates slowed by the target's load, unit transfers",
            slots: vec![
                slot("source-c", List(vec![1.0]), "baseline growth c_i > 0 of each source"),
                slot("sink-c", List(vec![2.0]), "release magnitude c_j > 0 of each sink"),
                slot("logistic-alpha", Scalar(1.0), "logistic steepness in sources"),
                slot("logistic-beta", Scalar(2.0), "logistic capacity in sources"),
                slot("release-alpha", Scalar(1.0), "half-saturation level in sinks"),
                slot("gamma", Scalar(1.0), "rate scale"),
                slot("eps", Scalar(1.0), "target load offset in the numerator"),
                slot("eps-prime", Scalar(2.0), "target load offset in the denominator"),
            ],
        },
        BuiltinInfo {
            name: "exit-tree",
            summary: "two sources, two neutral patches and two sinks; every patch has a route to the sinks",
            slots: vec![slot("rate", Scalar(1.0), "transfer rate on every edge")],
        },
        BuiltinInfo {
            name: "two-pair-connected",
            summary: "two source-sink pairs joined through the sinks; every sink reachable from every patch",
            slots: vec![
                slot("growth", List(vec![1.0, 2.0, -2.5, -1.5]), "growth constants of sources 1, 2 and sinks 3, 4"),
                slot("rate", Scalar(1.0), "transfer rate on every edge"),
            ],
        },
        BuiltinInfo {
            name: "two-pair-trapped",
            summary: "as two-pair-connected, but patches 2 and 4 form a closed pair with no route to sink 3",
            slots: vec![
                slot("growth", List(vec![1.0, 2.0, -2.5, -1.5]), "growth constants of sources 1, 2 and sinks 3, 4"),
                slot("rate", Scalar(1.0), "transfer rate on every edge"),
            ],
        },
        BuiltinInfo {
            name: "linear-relaxation",
            summary: "growth a_i - x_i, unit rates on every ordered pair, relative uniform transfers with mean m_i x_i",
            slots: vec![
                slot("a", List(vec![1.0, 2.0]), "relaxation level per patch, nonnegative"),
                slot("m", List(vec![0.5, 0.5]), "mean transferred fraction per origin patch, in (0, 1)"),
            ],
        },
    ]
}

struct Resolved<'a> {
    model: &'static str,
    slots: Vec<ParamSlot>,
    given: &'a Params,
}

impl Resolved<'_> {
    fn get(&self, name: &str) -> &Param {
        self.given
            .get(name)
            .or_else(|| self.slots.iter().find(|s| s.name == name).map(|s| &s.default))
            .expect("slot exists")
    }

    fn scalar(&self, name: &str) -> Result<f64> {
        match self.get(name) {
            Scalar(v) => Ok(*v),
            List(_) => Err(Error::InvalidModel(format!("{}: parameter {name} must be a number", self.model))),
        }
    }

    fn list(&self, name: &str) -> Result<Vec<f64>> {
        match self.get(name) {
            List(v) if !v.is_empty() => Ok(v.clone()),
            Scalar(v) => Ok(vec![*v]),
            List(_) => Err(Error::InvalidModel(format!("{}: parameter {name} must not be empty", self.model))),
        }
    }
}

fn class_of(c: f64) -> PatchClass {
    if c > 0.0 {
        PatchClass::Source
    } else if c < 0.0 {
        PatchClass::Sink
    } else {
        PatchClass::Neutral
    }
}

fn complete(n: usize) -> impl Iterator<Item = Edge> {
    (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| Edge::new(i, j)))
}

fn constant_graph(name: &str, growth: &[f64], rate: f64, edges: &[(usize, usize)]) -> Result<NetworkModel> {
    let mut b = NetworkModel::builder(name);
    for &c in growth {
        b = b.patch(class_of(c), GrowthSpec::constant(c));
    }
    for &(i, j) in edges {
        b = b.edge(Edge::one_based(i, j), RateSpec::Constant { rate }, AmplitudeLaw::UniformFraction);
    }
    b.build()
}

/// Relative uniform law with mean `m` in `(0, 1)`: `[0, 2m]` or `[2m - 1, 1]`.
pub fn relative_uniform_with_mean(m: f64) -> Result<RelativeLaw> {
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::InvalidModel(format!("mean fraction {m} must lie in (0, 1)")));
    }
    if m <= 0.5 {
        RelativeLaw::uniform(0.0, 2.0 * m)
    } else {
        RelativeLaw::uniform(2.0 * m - 1.0, 1.0)
    }
}

/// Builds the named built-in model; missing parameters take their defaults.
pub fn builtin_model(name: &str, params: &Params) -> Result<NetworkModel> {
    let info = list_builtin_models()
        .into_iter()
        .find(|b| b.name == name)
        .ok_or_else(|| Error::InvalidModel(format!("unknown built-in model {name:?}")))?;
    for key in params.keys() {
        if !info.slots.iter().any(|s| s.name == key) {
            return Err(Error::InvalidModel(format!("{name}: unknown parameter {key:?}")));
        }
    }
    let p = Resolved { model: info.name, slots: info.slots, given: params };
    match info.name {
        "constant-multiplicative" => {
            let growth = p.list("growth")?;
            let rate = p.scalar("rate")?;
            let mut b = NetworkModel::builder(name);
            for &c in &growth {
                b = b.patch(class_of(c), GrowthSpec::constant(c));
            }
            for e in complete(growth.len()) {
                b = b.edge(e, RateSpec::Constant { rate }, AmplitudeLaw::UniformFraction);
            }
            b.build()
        }
        "constant-unitary" => {
            let growth = p.list("growth")?;
            let exponent = p.scalar("alpha")?;
            let mut b = NetworkModel::builder(name);
            for &c in &growth {
                b = b.patch(class_of(c), GrowthSpec::constant(c));
            }
            for e in complete(growth.len()) {
                b = b.edge(e, RateSpec::PowerLaw { exponent }, AmplitudeLaw::UnitDirac);
            }
            b.build()
        }
        "logistic-unitary" => {
            let sources = p.list("source-c")?;
            let sinks = p.list("sink-c")?;
            let (alpha, beta) = (p.scalar("logistic-alpha")?, p.scalar("logistic-beta")?);
            let release = p.scalar("release-alpha")?;
            let rate = RateSpec::CarryingCapacity {
                gamma: p.scalar("gamma")?,
                eps: p.scalar("eps")?,
                eps_prime: p.scalar("eps-prime")?,
            };
            let mut b = NetworkModel::builder(name);
            for &c in &sources {
                b = b.patch(PatchClass::Source, GrowthSpec::Logistic { alpha, beta, c });
            }
            for &c in &sinks {
                b = b.patch(PatchClass::Sink, GrowthSpec::SinkRelease { c, alpha: release });
            }
            for i in 0..sources.len() {
                for j in 0..sinks.len() {
                    b = b.edge(Edge::new(i, sources.len() + j), rate, AmplitudeLaw::UnitDirac);
                }
            }
            b.build()
        }
        "exit-tree" => constant_graph(
            name,
            &[1.0, 1.0, 0.0, 0.0, -2.0, -2.0],
            p.scalar("rate")?,
            &[(2, 1), (3, 1), (4, 1), (1, 5), (2, 3), (1, 4), (5, 6), (6, 5)],
        ),
        "two-pair-connected" => constant_graph(
            name,
            &fixed_len(&p, 4)?,
            p.scalar("rate")?,
            &[(1, 3), (2, 4), (3, 4), (4, 3), (3, 1), (4, 2)],
        ),
        "two-pair-trapped" => constant_graph(
            name,
            &fixed_len(&p, 4)?,
            p.scalar("rate")?,
            &[(1, 3), (3, 1), (3, 2), (2, 4), (4, 2)],
        ),
        "linear-relaxation" => {
            let a = p.list("a")?;
            let m = p.list("m")?;
            if a.len() != m.len() {
                return Err(Error::InvalidModel(format!("{name}: a and m must have equal length")));
            }
            if a.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::InvalidModel(format!("{name}: a must be nonnegative")));
            }
            let mut b = NetworkModel::builder(name);
            for &ai in &a {
                b = b.patch(PatchClass::Source, GrowthSpec::Affine { intercept: ai, slope: -1.0 });
            }
            for e in complete(a.len()) {
                let law = relative_uniform_with_mean(m[e.from])?;
                b = b.edge(e, RateSpec::Constant { rate: 1.0 }, AmplitudeLaw::Relative(law));
            }
            b.build()
        }
        _ => unreachable!("catalog and constructors agree"),
    }
}

fn fixed_len(p: &Resolved<'_>, n: usize) -> Result<Vec<f64>> {
    let g = p.list("growth")?;
    if g.len() != n {
        return Err(Error::InvalidModel(format!("{}: growth needs {n} entries", p.model)));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_model;
    use crate::stability::{classify, Verdict};

    fn defaults(name: &str) -> NetworkModel {
        builtin_model(name, &Params::new()).unwrap()
    }

    #[test]
    fn catalog_names_are_stable() {
        let names: Vec<&str> = list_builtin_models().iter().map(|b| b.name).collect();
        for want in ["constant-multiplicative", "constant-unitary", "logistic-unitary", "two-pair-connected", "two-pair-trapped"] {
            assert!(names.contains(&want), "{want}");
        }
        for n in names {
            assert!(builtin_model(n, &Params::new()).is_ok(), "{n}");
        }
    }

    #[test]
    fn reference_families_validate() {
        for n in ["constant-multiplicative", "constant-unitary", "logistic-unitary", "exit-tree", "two-pair-connected"] {
            let r = validate_model(&defaults(n));
            assert!(r.is_valid(), "{n}: {r:?}");
        }
    }

    #[test]
    fn classifications() {
        assert_eq!(classify(&defaults("constant-multiplicative")).classification, Verdict::Ergodic);
        assert_eq!(classify(&defaults("constant-unitary")).classification, Verdict::Ergodic);
        assert_eq!(classify(&defaults("logistic-unitary")).classification, Verdict::Ergodic);
        assert_eq!(classify(&defaults("two-pair-connected")).classification, Verdict::Ergodic);
        assert_eq!(classify(&defaults("two-pair-trapped")).classification, Verdict::Unknown);
        let mut p = Params::new();
        p.insert("growth".into(), List(vec![1.0, -1.0]));
        assert_eq!(classify(&builtin_model("constant-multiplicative", &p).unwrap()).classification, Verdict::Transient);
    }

    #[test]
    fn parameters_are_checked() {
        let mut p = Params::new();
        p.insert("colour".into(), Scalar(1.0));
        assert!(builtin_model("constant-unitary", &p).is_err());
        let mut p = Params::new();
        p.insert("rate".into(), List(vec![1.0, 2.0]));
        assert!(builtin_model("constant-multiplicative", &p).is_err());
        assert!(builtin_model("no-such-model", &Params::new()).is_err());
    }

    #[test]
    fn relaxation_law_has_requested_mean() {
        for m in [0.01, 0.2, 0.5, 0.9, 0.99] {
            let law = relative_uniform_with_mean(m).unwrap();
            assert!((law.mean() - m).abs() < 1e-12, "{m}: {}", law.mean());
        }
        assert!(relative_uniform_with_mean(0.0).is_err() && relative_uniform_with_mean(1.0).is_err());
    }
}
