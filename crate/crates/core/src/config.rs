//! Model description files (TOML).
//!
//! A model is either a built-in with parameter overrides or a full list of
//! patches and edges. Edge endpoints are one-based.
//!
//! ```toml
//! format-version = 1
//!
//! [model]
//! name = "pair"
//!
//! [[model.patches]]
//! class = "source"
//! growth = { kind = "constant", rate = 1.0 }
//!
//! [[model.patches]]
//! class = "sink"
//! growth = { kind = "constant", rate = -2.0 }
//!
//! [[model.edges]]
//! from = 1
//! to = 2
//! rate = { kind = "constant", rate = 1.0 }
//! amplitude = { kind = "uniform-fraction" }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::builtin::{builtin_model, Params};
use crate::error::{Error, Result};
use crate::model::{AmplitudeLaw, Edge, GrowthSpec, NetworkModel, PatchClass, RateSpec, RelativeLaw, Theta};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GrowthDesc {
    Constant { rate: f64 },
    Logistic { alpha: f64, beta: f64, c: f64 },
    SinkRelease { c: f64, alpha: f64 },
    Tabulated { knots: Vec<f64>, values: Vec<f64> },
    Affine { intercept: f64, slope: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RateDesc {
    Zero,
    Constant {
        rate: f64,
    },
    PowerLaw {
        exponent: f64,
    },
    Coercive {
        offset: f64,
        scale: f64,
        exponent: f64,
        multiplier: f64,
    },
    CarryingCapacity {
        gamma: f64,
        eps: f64,
        #[serde(rename = "eps-prime")]
        eps_prime: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AmplitudeDesc {
    UniformFraction,
    UnitDirac,
    /// Share of the origin drawn from a piecewise-linear density on `[0, 1]`.
    Relative { knots: Vec<f64>, density: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchDesc {
    pub class: PatchClass,
    pub growth: GrowthDesc,
}

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDesc {
    pub from: usize,
    pub to: usize,
    pub rate: RateDesc,
    pub amplitude: AmplitudeDesc,
    /// Whether the edge belongs to the active graph.
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ModelDesc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Params::is_empty")]
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub patches: Vec<PatchDesc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<EdgeDesc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_bound: Option<f64>,
}

/// Top level of a standalone model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ModelFile {
    pub format_version: u32,
    pub model: ModelDesc,
}

impl GrowthDesc {
    fn to_spec(&self) -> GrowthSpec {
        match self.clone() {
            GrowthDesc::Constant { rate } => GrowthSpec::Constant { rate },
            GrowthDesc::Logistic { alpha, beta, c } => GrowthSpec::Logistic { alpha, beta, c },
            GrowthDesc::SinkRelease { c, alpha } => GrowthSpec::SinkRelease { c, alpha },
            GrowthDesc::Tabulated { knots, values } => GrowthSpec::Tabulated { knots, values },
            GrowthDesc::Affine { intercept, slope } => GrowthSpec::Affine { intercept, slope },
        }
    }

    fn from_spec(g: &GrowthSpec) -> Self {
        match g.clone() {
            GrowthSpec::Constant { rate } => GrowthDesc::Constant { rate },
            GrowthSpec::Logistic { alpha, beta, c } => GrowthDesc::Logistic { alpha, beta, c },
            GrowthSpec::SinkRelease { c, alpha } => GrowthDesc::SinkRelease { c, alpha },
            GrowthSpec::Tabulated { knots, values } => GrowthDesc::Tabulated { knots, values },
            GrowthSpec::Affine { intercept, slope } => GrowthDesc::Affine { intercept, slope },
        }
    }
}

impl RateDesc {
    fn to_spec(&self) -> RateSpec {
        match *self {
            RateDesc::Zero => RateSpec::Zero,
            RateDesc::Constant { rate } => RateSpec::Constant { rate },
            RateDesc::PowerLaw { exponent } => RateSpec::PowerLaw { exponent },
            RateDesc::Coercive { offset, scale, exponent, multiplier } => {
                RateSpec::Coercive { theta: Theta { offset, scale, exponent }, multiplier }
            }
            RateDesc::CarryingCapacity { gamma, eps, eps_prime } => {
                RateSpec::CarryingCapacity { gamma, eps, eps_prime }
            }
        }
    }

    fn from_spec(r: &RateSpec) -> Self {
        match *r {
            RateSpec::Zero => RateDesc::Zero,
            RateSpec::Constant { rate } => RateDesc::Constant { rate },
            RateSpec::PowerLaw { exponent } => RateDesc::PowerLaw { exponent },
            RateSpec::Coercive { theta, multiplier } => RateDesc::Coercive {
                offset: theta.offset,
                scale: theta.scale,
                exponent: theta.exponent,
                multiplier,
            },
            RateSpec::CarryingCapacity { gamma, eps, eps_prime } => {
                RateDesc::CarryingCapacity { gamma, eps, eps_prime }
            }
        }
    }
}

impl AmplitudeDesc {
    fn to_law(&self) -> Result<AmplitudeLaw> {
        Ok(match self {
            AmplitudeDesc::UniformFraction => AmplitudeLaw::UniformFraction,
            AmplitudeDesc::UnitDirac => AmplitudeLaw::UnitDirac,
            AmplitudeDesc::Relative { knots, density } => {
                AmplitudeLaw::Relative(RelativeLaw::new(knots.clone(), density.clone())?)
            }
        })
    }

    fn from_law(a: &AmplitudeLaw) -> Result<Self> {
        match a {
            AmplitudeLaw::UniformFraction => Ok(AmplitudeDesc::UniformFraction),
            AmplitudeLaw::UnitDirac => Ok(AmplitudeDesc::UnitDirac),
            AmplitudeLaw::Relative(law) => {
                Ok(AmplitudeDesc::Relative { knots: law.knots().to_vec(), density: law.density().to_vec() })
            }
            AmplitudeLaw::Custom(_) => Err(Error::Unsupported("custom quantile functions cannot be written to a file".into())),
        }
    }
}

impl ModelDesc {
    /// Builds the model. Structural errors (bad indices, bad parameters)
    /// come back as `InvalidModel`; the assumptions are not checked here.
    pub fn build(&self) -> Result<NetworkModel> {
        if let Some(name) = &self.builtin {
            if !self.patches.is_empty() || !self.edges.is_empty() || self.m_bound.is_some() {
                return Err(Error::Parse("a built-in model takes params only, not patches, edges or m-bound".into()));
            }
            return builtin_model(name, &self.params);
        }
        if !self.params.is_empty() {
            return Err(Error::Parse("params apply to built-in models only".into()));
        }
        let name = self.name.clone().ok_or_else(|| Error::Parse("model needs a name or a builtin".into()))?;
        let mut b = NetworkModel::builder(name);
        for p in &self.patches {
            b = b.patch(p.class, p.growth.to_spec());
        }
        for e in &self.edges {
            if e.from == 0 || e.to == 0 {
                return Err(Error::InvalidModel(format!("edge ({},{}): patches are numbered from 1", e.from, e.to)));
            }
            let edge = Edge::one_based(e.from, e.to);
            let (rate, law) = (e.rate.to_spec(), e.amplitude.to_law()?);
            b = if e.active { b.edge(edge, rate, law) } else { b.passive_edge(edge, rate, law) };
        }
        if let Some(m) = self.m_bound {
            b = b.m_bound(m);
        }
        b.build()
    }

    /// Full description of a model; fails for custom quantile functions.
    pub fn from_model(model: &NetworkModel) -> Result<Self> {
        let patches = (0..model.n())
            .map(|i| PatchDesc { class: model.class(i), growth: GrowthDesc::from_spec(model.growth(i)) })
            .collect();
        let mut edges: Vec<Edge> = model.active_edges().iter().chain(model.transfer_edges()).copied().collect();
        edges.sort();
        edges.dedup();
        let edges = edges
            .into_iter()
            .map(|e| {
                Ok(EdgeDesc {
                    from: e.from + 1,
                    to: e.to + 1,
                    rate: RateDesc::from_spec(model.rate(e)),
                    amplitude: AmplitudeDesc::from_law(model.amplitude(e))?,
                    active: model.is_active(e),
                })
            })
            .collect::<Result<_>>()?;
        Ok(ModelDesc {
            builtin: None,
            params: Params::new(),
            name: Some(model.name().to_string()),
            patches,
            edges,
            m_bound: model.supplied_m_bound(),
        })
    }
}

pub fn check_version(v: u32) -> Result<()> {
    if v == FORMAT_VERSION {
        Ok(())
    } else {
        Err(Error::Parse(format!("unsupported format-version {v}; expected {FORMAT_VERSION}")))
    }
}

pub fn parse_model_file(text: &str) -> Result<ModelDesc> {
    let file: ModelFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    check_version(file.format_version)?;
    Ok(file.model)
}

pub fn load_model(path: &Path) -> Result<NetworkModel> {
    parse_model_file(&std::fs::read_to_string(path)?)?.build()
}

pub fn model_to_toml(model: &NetworkModel) -> Result<String> {
    let file = ModelFile { format_version: FORMAT_VERSION, model: ModelDesc::from_model(model)? };
    toml::to_string(&file).map_err(|e| Error::Internal(e.to_string()))
}
