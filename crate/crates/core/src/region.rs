//! Region predicates on the state space and their time profile along one flow
//! segment.
//!
//! A region is a conjunction of atoms, optionally negated. Along a segment of
//! a constant-growth model every coordinate is piecewise linear with kinks
//! only at drain times, so the profile is computed exactly. Other models are
//! scanned on a grid and membership changes are located by bisection.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::flow;
use crate::model::NetworkModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Atom {
    /// `min_{i in patches} x_i >= level`.
    MinAtLeast { patches: Vec<usize>, level: f64 },
    /// `sum_i x_i >= level`.
    TotalAtLeast { level: f64 },
    Positive { patch: usize },
    Empty { patch: usize },
}

impl Atom {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Atom::MinAtLeast { patches, level } => patches.iter().all(|&i| x[i] >= *level),
            Atom::TotalAtLeast { level } => x.iter().sum::<f64>() >= *level,
            Atom::Positive { patch } => x[*patch] > 0.0,
            Atom::Empty { patch } => x[*patch] <= 0.0,
        }
    }

    fn patches(&self) -> Vec<usize> {
        match self {
            Atom::MinAtLeast { patches, .. } => patches.clone(),
            Atom::TotalAtLeast { .. } => Vec::new(),
            Atom::Positive { patch } | Atom::Empty { patch } => vec![*patch],
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::MinAtLeast { patches, level } => {
                let names: Vec<String> = patches.iter().map(|i| (i + 1).to_string()).collect();
                write!(f, "min(x[{}]) >= {level}", names.join(","))
            }
            Atom::TotalAtLeast { level } => write!(f, "total >= {level}"),
            Atom::Positive { patch } => write!(f, "x[{}] > 0", patch + 1),
            Atom::Empty { patch } => write!(f, "x[{}] = 0", patch + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Region {
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub negated: bool,
}

/// Time spent inside a region along one segment `[0, dt]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentProfile {
    pub time_inside: f64,
    /// Earliest time (infimum) at which the path is inside.
    pub first_inside: Option<f64>,
    /// Earliest time (infimum) at which the path is outside.
    pub first_outside: Option<f64>,
}

const GRID_POINTS: usize = 64;
const BISECTION_TOL: f64 = 1e-12;

impl Region {
    /// The whole state space.
    pub fn everything() -> Self {
        Region::default()
    }

    pub fn all(atoms: Vec<Atom>) -> Self {
        Region { atoms, negated: false }
    }

    pub fn not(mut self) -> Self {
        self.negated = !self.negated;
        self
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.atoms.iter().all(|a| a.contains(x)) != self.negated
    }

    /// Largest patch index referenced, if any.
    pub fn max_patch(&self) -> Option<usize> {
        self.atoms.iter().flat_map(Atom::patches).max()
    }

    /// Profile of the flow segment starting at `x` and lasting `dt`.
    pub fn segment_profile(&self, model: &NetworkModel, x: &[f64], dt: f64) -> SegmentProfile {
        if dt <= 0.0 {
            let inside = self.contains(x);
            return SegmentProfile {
                time_inside: 0.0,
                first_inside: inside.then_some(0.0),
                first_outside: (!inside).then_some(0.0),
            };
        }
        let inside = match model.growth_constants() {
            Some(c) => self.linear_inside(&c, x, dt),
            None => self.scanned_inside(model, x, dt),
        };
        profile_from_intervals(&inside, dt)
    }

    fn linear_inside(&self, c: &[f64], x: &[f64], dt: f64) -> Vec<(f64, f64)> {
        let mut breaks = vec![0.0];
        for (&y, &ci) in x.iter().zip(c) {
            if ci < 0.0 && y > 0.0 {
                let t = y / -ci;
                if t < dt {
                    breaks.push(t);
                }
            }
        }
        breaks.push(dt);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();

        let mut inside = Vec::new();
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            // coordinate k on this piece: start[k] + slope[k] * (t - a)
            let start: Vec<f64> = x
                .iter()
                .zip(c)
                .map(|(&y, &ci)| if ci < 0.0 { (y + ci * a).max(0.0) } else { y + ci * a })
                .collect();
            let slope: Vec<f64> = start
                .iter()
                .zip(c)
                .map(|(&s, &ci)| if ci < 0.0 && s <= 0.0 { 0.0 } else { ci })
                .collect();
            let mut lo = a;
            let mut hi = b;
            for atom in &self.atoms {
                let (l, h) = atom_interval(atom, &start, &slope, a, b);
                lo = lo.max(l);
                hi = hi.min(h);
            }
            let conj = if lo <= hi { Some((lo, hi)) } else { None };
            if self.negated {
                match conj {
                    None => inside.push((a, b)),
                    Some((l, h)) => {
                        if l > a {
                            inside.push((a, l));
                        }
                        if h < b {
                            inside.push((h, b));
                        }
                    }
                }
            } else if let Some(iv) = conj {
                inside.push(iv);
            }
        }
        inside
    }

    fn scanned_inside(&self, model: &NetworkModel, x: &[f64], dt: f64) -> Vec<(f64, f64)> {
        let state_at = |t: f64| -> Vec<f64> {
            let mut y = x.to_vec();
            flow::flow_in_place(model, &mut y, t, None);
            y
        };
        let member = |t: f64| self.contains(&state_at(t));
        let mut inside = Vec::new();
        let mut prev_t = 0.0;
        let mut prev_in = self.contains(x);
        let mut open = if prev_in { Some(0.0) } else { None };
        for k in 1..=GRID_POINTS {
            let t = dt * k as f64 / GRID_POINTS as f64;
            let now_in = member(t);
            if now_in != prev_in {
                let (mut lo, mut hi) = (prev_t, t);
                while hi - lo > BISECTION_TOL * dt.max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    if member(mid) == prev_in {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let cross = 0.5 * (lo + hi);
                if now_in {
                    open = Some(cross);
                } else if let Some(s) = open.take() {
                    inside.push((s, cross));
                }
            }
            prev_t = t;
            prev_in = now_in;
        }
        if let Some(s) = open {
            inside.push((s, dt));
        }
        inside
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let body = if self.atoms.is_empty() {
            "everything".to_string()
        } else {
            self.atoms.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" and ")
        };
        if self.negated {
            write!(f, "not ({body})")
        } else {
            f.write_str(&body)
        }
    }
}

/// Times in `[a, b]` where a linear expression `v + s (t - a)` is `>= level`.
fn linear_at_least(v: f64, s: f64, level: f64, a: f64, b: f64) -> (f64, f64) {
    if s == 0.0 {
        return if v >= level { (a, b) } else { (b, a) };
    }
    let cross = a + (level - v) / s;
    if s > 0.0 {
        (cross.max(a), b)
    } else {
        (a, cross.min(b))
    }
}

fn atom_interval(atom: &Atom, start: &[f64], slope: &[f64], a: f64, b: f64) -> (f64, f64) {
    match atom {
        Atom::MinAtLeast { patches, level } => {
            let mut lo = a;
            let mut hi = b;
            for &i in patches {
                let (l, h) = linear_at_least(start[i], slope[i], *level, a, b);
                lo = lo.max(l);
                hi = hi.min(h);
            }
            (lo, hi)
        }
        Atom::TotalAtLeast { level } => {
            let v: f64 = start.iter().sum();
            let s: f64 = slope.iter().sum();
            linear_at_least(v, s, *level, a, b)
        }
        Atom::Positive { patch } => {
            let (v, s) = (start[*patch], slope[*patch]);
            if v > 0.0 || s > 0.0 {
                (a, b)
            } else {
                (b, a)
            }
        }
        Atom::Empty { patch } => {
            let (v, s) = (start[*patch], slope[*patch]);
            if v <= 0.0 && s <= 0.0 {
                (a, b)
            } else {
                (b, a)
            }
        }
    }
}

fn profile_from_intervals(inside: &[(f64, f64)], dt: f64) -> SegmentProfile {
    let mut ivs: Vec<(f64, f64)> = inside.iter().copied().filter(|(l, h)| l <= h).collect();
    ivs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (l, h) in ivs {
        match merged.last_mut() {
            Some(last) if l <= last.1 => last.1 = last.1.max(h),
            _ => merged.push((l, h)),
        }
    }
    let time_inside = merged.iter().map(|(l, h)| h - l).sum::<f64>().min(dt);
    let first_inside = merged.first().map(|iv| iv.0);
    let first_outside = match merged.first() {
        Some(&(l, h)) if l <= 0.0 => {
            if h < dt {
                Some(h)
            } else {
                None
            }
        }
        _ => Some(0.0),
    };
    SegmentProfile { time_inside, first_inside, first_outside }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GrowthSpec, PatchClass};

    fn model(c: &[f64]) -> NetworkModel {
        let mut b = NetworkModel::builder("r");
        for &ci in c {
            let class = if ci > 0.0 { PatchClass::Source } else { PatchClass::Sink };
            b = b.patch(class, GrowthSpec::constant(ci));
        }
        b.build().unwrap()
    }

    #[test]
    fn positive_sink_profile() {
        let m = model(&[1.0, -2.0]);
        let r = Region::all(vec![Atom::Positive { patch: 1 }]);
        let p = r.segment_profile(&m, &[0.0, 3.0], 2.0);
        assert_eq!(p.time_inside, 1.5);
        assert_eq!(p.first_inside, Some(0.0));
        assert_eq!(p.first_outside, Some(1.5));

        let empty = r.clone().not();
        let q = empty.segment_profile(&m, &[0.0, 3.0], 2.0);
        assert_eq!(q.time_inside, 0.5);
        assert_eq!(q.first_inside, Some(1.5));
    }

    #[test]
    fn total_is_convex_across_a_drain() {
        // total = 1 - t until t = 0.5, then 0.5 + 2 (t - 0.5)
        let m = model(&[2.0, -3.0]);
        let r = Region::all(vec![Atom::TotalAtLeast { level: 0.9 }]);
        let p = r.segment_profile(&m, &[0.0, 1.5], 1.0);
        // x1 = 2t, x2 = 1.5 - 3t, total = 1.5 - t until t = 0.5; then 2t
        // 1.5 - t >= 0.9 for t <= 0.6 -> whole first piece; 2t >= 0.9 for t >= 0.45
        assert!((p.time_inside - 1.0).abs() < 1e-15);
        let high = Region::all(vec![Atom::TotalAtLeast { level: 1.2 }]);
        let q = high.segment_profile(&m, &[0.0, 1.5], 1.0);
        // first piece: t <= 0.3; second piece: t >= 0.6
        assert!((q.time_inside - 0.7).abs() < 1e-15);
        assert!((q.first_outside.unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn min_atom_and_scan_agree() {
        let lin = model(&[1.0, -1.0]);
        let nonlin = NetworkModel::builder("t")
            .patch(PatchClass::Source, GrowthSpec::Tabulated { knots: vec![0.0], values: vec![1.0] })
            .patch(PatchClass::Sink, GrowthSpec::Tabulated { knots: vec![0.0, 1e-12], values: vec![0.0, -1.0] })
            .build()
            .unwrap();
        let r = Region::all(vec![Atom::MinAtLeast { patches: vec![0, 1], level: 1.0 }]);
        let x = [0.5, 2.0];
        let a = r.segment_profile(&lin, &x, 3.0);
        let b = r.segment_profile(&nonlin, &x, 3.0);
        // x1 = 0.5 + t >= 1 for t >= 0.5; x2 = 2 - t >= 1 for t <= 1
        assert!((a.time_inside - 0.5).abs() < 1e-15);
        assert!((b.time_inside - 0.5).abs() < 1e-9);
        assert!((b.first_inside.unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn everything_contains_every_state() {
        let m = model(&[1.0, -2.0]);
        let p = Region::everything().segment_profile(&m, &[0.0, 1.0], 4.0);
        assert_eq!(p.time_inside, 4.0);
        assert_eq!(p.first_outside, None);
        assert_eq!(Region::everything().to_string(), "everything");
    }
}
