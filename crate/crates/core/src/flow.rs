//! Deterministic flow between transfers.
//!
//! Every growth field depends on its own coordinate only, so the flow is a
//! product of one-dimensional flows. Each variant is integrated in closed form:
//! constant growth is linear with a kink at drain, logistic growth follows a
//! Riccati solution below its carrying capacity, sink release is inverted from
//! its implicit solution by Newton steps, and tabulated or affine fields are
//! affine on each knot interval.
//!
//! A coordinate that only approaches zero asymptotically is declared drained
//! at [`DRAIN_THRESHOLD`] and clamped to zero from then on.

use crate::error::{contract, Result};
use crate::model::{GrowthSpec, NetworkModel, PatchClass};

pub const DRAIN_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub x_end: Vec<f64>,
    /// `(patch, time)` for every coordinate that went from positive to zero.
    pub drain_events: Vec<(usize, f64)>,
}

/// `Phi(x, dt)`.
pub fn flow(model: &NetworkModel, x: &[f64], dt: f64) -> Result<FlowResult> {
    model.check_state(x)?;
    if !(dt >= 0.0) {
        return Err(contract(format!("flow duration {dt} must be nonnegative")));
    }
    let mut x_end = x.to_vec();
    let mut drain_events = Vec::new();
    flow_in_place(model, &mut x_end, dt, Some(&mut drain_events));
    Ok(FlowResult { x_end, drain_events })
}

/// Flows `x` forward by `dt` without argument checks. Drain times are
/// relative to the start of the step and pushed in patch order.
pub fn flow_in_place(model: &NetworkModel, x: &mut [f64], dt: f64, mut drains: Option<&mut Vec<(usize, f64)>>) {
    if dt == 0.0 {
        return;
    }
    for (i, y) in x.iter_mut().enumerate() {
        let (y_end, drain) = coordinate_flow(model.growth(i), *y, dt);
        *y = y_end;
        if let (Some(t), Some(d)) = (drain, drains.as_deref_mut()) {
            d.push((i, t));
        }
    }
}

/// One-dimensional flow of `y` for `dt` (which may be infinite when only the
/// drain time matters). Returns the end value and the drain time, if the
/// coordinate went from positive to zero during the step.
pub fn coordinate_flow(g: &GrowthSpec, y: f64, dt: f64) -> (f64, Option<f64>) {
    if dt == 0.0 {
        return (y, None);
    }
    match *g {
        GrowthSpec::Constant { rate } => {
            if rate >= 0.0 {
                (y + rate * dt, None)
            } else if y <= 0.0 {
                (0.0, None)
            } else {
                let t_drain = y / -rate;
                if t_drain <= dt {
                    (0.0, Some(t_drain))
                } else {
                    ((y + rate * dt).max(0.0), None)
                }
            }
        }
        GrowthSpec::Logistic { alpha, beta, c } => (logistic_flow(alpha, beta, c, y, dt), None),
        GrowthSpec::SinkRelease { c, alpha } => release_flow(c, alpha, y, dt),
        GrowthSpec::Affine { intercept, slope } => {
            piecewise_affine_flow(y, dt, |_, _| Segment {
                a: intercept,
                s: slope,
                lower: f64::NEG_INFINITY,
                upper: f64::INFINITY,
            })
        }
        GrowthSpec::Tabulated { ref knots, ref values } => {
            piecewise_affine_flow(y, dt, |y, up| tabulated_segment(knots, values, y, up))
        }
    }
}

/// Time for a coordinate starting at `y` to reach zero; `0` for an empty
/// coordinate and infinite when it never drains.
pub fn coordinate_drain_time(g: &GrowthSpec, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    match coordinate_flow(g, y, f64::INFINITY) {
        (_, Some(t)) => t,
        _ => f64::INFINITY,
    }
}

/// Drain time of sink `i` from state `x`.
pub fn drain_time(model: &NetworkModel, x: &[f64], i: usize) -> Result<f64> {
    model.check_state(x)?;
    if i >= model.n() || model.class(i) != PatchClass::Sink {
        return Err(contract(format!("patch {} is not a sink", i + 1)));
    }
    Ok(coordinate_drain_time(model.growth(i), x[i]))
}

/// `sum_i phi^i(x)`.
pub fn sum_growth(model: &NetworkModel, x: &[f64]) -> f64 {
    (0..model.n()).map(|i| model.growth(i).eval(x[i])).sum()
}

fn logistic_flow(alpha: f64, beta: f64, c: f64, y: f64, dt: f64) -> f64 {
    if y >= beta {
        return y + c * dt;
    }
    let disc = (beta * beta + 4.0 * c / alpha).sqrt();
    let r_plus = 0.5 * (beta + disc);
    let r_minus = 0.5 * (beta - disc);
    let d = alpha * (r_plus - r_minus);
    let k = (y - r_plus) / (y - r_minus);
    let t_beta = (k * (beta - r_minus) / (beta - r_plus)).ln() / d;
    if dt >= t_beta {
        return beta + c * (dt - t_beta);
    }
    let ke = k * (-d * dt).exp();
    let z = r_plus + (r_plus - r_minus) * ke / (1.0 - ke);
    z.clamp(y, beta)
}

fn release_flow(c: f64, alpha: f64, y: f64, dt: f64) -> (f64, Option<f64>) {
    if y <= 0.0 {
        return (0.0, None);
    }
    if y <= DRAIN_THRESHOLD {
        return (0.0, Some(0.0));
    }
    let g = |v: f64| alpha * v.ln() + v;
    let t_drain = (g(y) - g(DRAIN_THRESHOLD)) / c;
    if dt >= t_drain {
        return (0.0, Some(t_drain));
    }
    // Solve alpha*u + e^u = G(y) - c*dt for u = ln(y(t)); the left side is
    // increasing and convex, so Newton from the right converges monotonically.
    let target = g(y) - c * dt;
    let mut u = y.ln();
    for _ in 0..200 {
        let h = alpha * u + u.exp() - target;
        let step = h / (alpha + u.exp());
        u -= step;
        if step.abs() <= 4.0 * f64::EPSILON * u.abs().max(1.0) {
            break;
        }
    }
    (u.exp().clamp(DRAIN_THRESHOLD, y), None)
}

/// Affine piece `phi(z) = a + s z` valid on `[lower, upper]`.
struct Segment {
    a: f64,
    s: f64,
    lower: f64,
    upper: f64,
}

fn tabulated_segment(knots: &[f64], values: &[f64], y: f64, up: bool) -> Segment {
    let last = knots.len() - 1;
    let below_first = if up { y < knots[0] } else { y <= knots[0] };
    let above_last = if up { y >= knots[last] } else { y > knots[last] };
    if below_first {
        return Segment { a: values[0], s: 0.0, lower: f64::NEG_INFINITY, upper: knots[0] };
    }
    if above_last {
        return Segment { a: values[last], s: 0.0, lower: knots[last], upper: f64::INFINITY };
    }
    let k = if up {
        knots.partition_point(|&u| u <= y) - 1
    } else {
        knots.partition_point(|&u| u < y) - 1
    };
    let s = (values[k + 1] - values[k]) / (knots[k + 1] - knots[k]);
    Segment { a: values[k] - s * knots[k], s, lower: knots[k], upper: knots[k + 1] }
}

enum Piece {
    Done(f64),
    Knot { t: f64, at: f64 },
    Drain { t: f64 },
}

/// Flow along `z' = a + s z` from `y` for at most `dt`, stopping at the
/// boundary in the direction of motion.
fn affine_piece(seg: &Segment, y: f64, dt: f64) -> Piece {
    let v = seg.a + seg.s * y;
    if v == 0.0 {
        return Piece::Done(y);
    }
    let up = v > 0.0;
    let fixed = if seg.s != 0.0 { -seg.a / seg.s } else { f64::NAN };
    let (target, is_drain) = if up {
        (seg.upper, false)
    } else {
        // Exact zero when the field crosses it; otherwise the drain threshold.
        let crosses_zero = if seg.s == 0.0 { seg.a < 0.0 } else { fixed < 0.0 || (seg.s > 0.0 && fixed > y) };
        let drain_level = if crosses_zero { 0.0 } else { DRAIN_THRESHOLD };
        if seg.lower > drain_level {
            (seg.lower, false)
        } else {
            (drain_level, true)
        }
    };
    if !up && is_drain && y <= target {
        return Piece::Drain { t: 0.0 };
    }
    let t_hit = if !target.is_finite() {
        f64::INFINITY
    } else if seg.s == 0.0 {
        (target - y) / seg.a
    } else {
        let ratio = (target - fixed) / (y - fixed);
        if ratio > 0.0 {
            let t = ratio.ln() / seg.s;
            if t >= 0.0 {
                t
            } else {
                f64::INFINITY
            }
        } else {
            f64::INFINITY
        }
    };
    if t_hit <= dt {
        return if is_drain { Piece::Drain { t: t_hit } } else { Piece::Knot { t: t_hit, at: target } };
    }
    let z = if seg.s == 0.0 {
        y + seg.a * dt
    } else {
        y + (y - fixed) * (seg.s * dt).exp_m1()
    };
    let z = if target.is_finite() {
        if up {
            z.clamp(y, target)
        } else {
            z.clamp(target, y)
        }
    } else if up {
        z.max(y)
    } else {
        z.min(y)
    };
    Piece::Done(z)
}

fn piecewise_affine_flow(mut y: f64, dt: f64, segment: impl Fn(f64, bool) -> Segment) -> (f64, Option<f64>) {
    let mut elapsed = 0.0;
    for _ in 0..10_000 {
        let probe = segment(y, true);
        let up = probe.a + probe.s * y > 0.0;
        let seg = if up { probe } else { segment(y, false) };
        if seg.a + seg.s * y == 0.0 {
            return (y, None);
        }
        if !up && y <= 0.0 {
            return (0.0, None);
        }
        match affine_piece(&seg, y, dt - elapsed) {
            Piece::Done(z) => return (z, None),
            Piece::Knot { t, at } => {
                elapsed += t;
                y = at;
            }
            Piece::Drain { t } => return (0.0, Some(elapsed + t)),
        }
    }
    (y, None)
}
