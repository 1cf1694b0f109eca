//! The infinitesimal generator on test functions and its Monte Carlo
//! finite-difference check.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::model::{NetworkModel, QUADRATURE_POINTS};
use crate::rng;
use crate::sim;
use crate::stats;

type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Test function with its gradient.
#[derive(Clone)]
pub enum TestFunction {
    Constant(f64),
    /// `x_k`.
    Coordinate(usize),
    /// `sum_i x_i`.
    Total,
    /// `x_k^2`.
    Square(usize),
    Custom { name: String, value: ValueFn, gradient: GradientFn },
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl TestFunction {
    pub fn name(&self) -> String {
        match self {
            TestFunction::Constant(c) => format!("constant {c}"),
            TestFunction::Coordinate(k) => format!("x{}", k + 1),
            TestFunction::Total => "total".into(),
            TestFunction::Square(k) => format!("x{}^2", k + 1),
            TestFunction::Custom { name, .. } => name.clone(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Constant(c) => *c,
            TestFunction::Coordinate(k) => x[*k],
            TestFunction::Total => x.iter().sum(),
            TestFunction::Square(k) => x[*k] * x[*k],
            TestFunction::Custom { value, .. } => value(x),
        }
    }

    /// `sum_k d_k f(x) phi^k(x)`.
    fn drift_term(&self, model: &NetworkModel, x: &[f64]) -> f64 {
        match self {
            TestFunction::Constant(_) => 0.0,
            TestFunction::Coordinate(k) => model.growth_at(*k, x),
            TestFunction::Total => (0..model.n()).map(|i| model.growth_at(i, x)).sum(),
            TestFunction::Square(k) => 2.0 * x[*k] * model.growth_at(*k, x),
            TestFunction::Custom { gradient, .. } => {
                gradient(x).iter().enumerate().map(|(k, g)| g * model.growth_at(k, x)).sum()
            }
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        match self {
            TestFunction::Coordinate(k) | TestFunction::Square(k) if *k >= n => {
                Err(contract(format!("test function refers to missing patch {}", k + 1)))
            }
            _ => Ok(()),
        }
    }
}

/// `A f(x)`: drift term plus, for every transfer pair, the rate times the
/// mean increment of `f` over the amount law. Jump terms are closed form
/// from the amount's first two moments for built-in test functions and use
/// a midpoint rule over the level otherwise.
pub fn generator_apply(model: &NetworkModel, f: &TestFunction, x: &[f64]) -> Result<f64> {
    model.check_state(x)?;
    f.check(model.n())?;
    Ok(generator_unchecked(model, f, x))
}

pub(crate) fn generator_unchecked(model: &NetworkModel, f: &TestFunction, x: &[f64]) -> f64 {
    let mut total = f.drift_term(model, x);
    for &e in model.transfer_edges() {
        let rate = model.rate_at(e, x);
        if rate == 0.0 {
            continue;
        }
        let (i, j) = (e.from, e.to);
        let jump = match f {
            TestFunction::Constant(_) | TestFunction::Total => 0.0,
            TestFunction::Coordinate(k) => {
                let (m1, _) = model.amplitude(e).moments(x, e);
                if *k == i {
                    -m1
                } else if *k == j {
                    m1
                } else {
                    0.0
                }
            }
            TestFunction::Square(k) => {
                let (m1, m2) = model.amplitude(e).moments(x, e);
                if *k == i {
                    -2.0 * x[i] * m1 + m2
                } else if *k == j {
                    2.0 * x[j] * m1 + m2
                } else {
                    0.0
                }
            }
            TestFunction::Custom { value, .. } => {
                let base = value(x);
                let mut y = x.to_vec();
                let mut acc = 0.0;
                for q in 0..QUADRATURE_POINTS {
                    let xi = (q as f64 + 0.5) / QUADRATURE_POINTS as f64;
                    let a = model.quantile(e, x, xi);
                    y[i] = x[i] - a;
                    y[j] = x[j] + a;
                    acc += value(&y) - base;
                }
                acc / QUADRATURE_POINTS as f64
            }
        };
        total += rate * jump;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynkinResult {
    /// `mean(f(X_h) - f(x)) / h`.
    pub finite_difference: f64,
    pub standard_error: f64,
    pub generator: f64,
    /// Half the change of the mean generator value over `[0, h]`.
    pub bias_allowance: f64,
    pub z: f64,
}

/// Compares `(E_x f(X_h) - f(x)) / h` with `A f(x)`.
///
/// The finite difference estimates the average of `E A f(X_s)` over
/// `[0, h]`; its first-order bias is estimated by half the change in
/// `E A f` across the step and subtracted before scaling by the standard
/// error.
pub fn dynkin_check(
    model: &NetworkModel,
    f: &TestFunction,
    x: &[f64],
    h: f64,
    replicas: usize,
    seed: u64,
) -> Result<DynkinResult> {
    model.check_state(x)?;
    f.check(model.n())?;
    if !(h > 0.0) || replicas < 2 {
        return Err(contract("the step must be positive and replicas at least two"));
    }
    let generator = generator_unchecked(model, f, x);
    let f0 = f.value(x);
    let runs: Vec<Result<(f64, f64)>> = rng::replicas(seed, replicas, |_, rng| {
        let out = sim::run(model, x, h, rng, &mut ())?;
        Ok((f.value(&out.x_end) - f0, generator_unchecked(model, f, &out.x_end)))
    });
    let mut diffs = Vec::with_capacity(replicas);
    let mut gens = Vec::with_capacity(replicas);
    for r in runs {
        let (d, g) = r?;
        diffs.push(d / h);
        gens.push(g);
    }
    let finite_difference = stats::mean(&diffs);
    let standard_error = stats::std_error(&diffs);
    let bias_allowance = 0.5 * (stats::mean(&gens) - generator).abs();
    let excess = ((finite_difference - generator).abs() - bias_allowance).max(0.0);
    let z = if standard_error > 0.0 {
        excess / standard_error
    } else if excess <= 1e-12 * generator.abs().max(1.0) {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(DynkinResult { finite_difference, standard_error, generator, bias_allowance, z })
}
