//! Trajectory files: a delimited text format and JSON.
//!
//! The text format starts with `#` header lines, then one row per record:
//!
//! ```text
//! # metapop trajectory 1
//! # model pair
//! # seed 42 replica 0
//! # t-end 100
//! record,t,i,j,xi,amount,x1,x2
//! init,0,,,,,5,5
//! event,0.7,1,2,0.31,1.55,4.15,5.15
//! sample,1,,,,,4.45,3.15
//! final,100,,,,,0,12
//! ```
//!
//! Patches are one-based; `x` columns of an event row hold the post-jump
//! state. Numbers use the shortest representation that reads back exactly.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Edge, NetworkModel, State};
use crate::sim::{Event, Sample, Trajectory};

pub const CSV_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(Format::Csv),
            Some("json") => Ok(Format::Json),
            _ => Err(Error::Parse(format!("cannot tell the format of {}", path.display()))),
        }
    }
}

fn push_row(out: &mut String, kind: &str, t: f64, jump: Option<(Edge, f64, f64)>, x: &[f64]) {
    let _ = write!(out, "{kind},{t}");
    match jump {
        Some((e, xi, amount)) => {
            let _ = write!(out, ",{},{},{xi},{amount}", e.from + 1, e.to + 1);
        }
        None => out.push_str(",,,,"),
    }
    for v in x {
        let _ = write!(out, ",{v}");
    }
    out.push('\n');
}

/// Text form of a trajectory. Post-jump states are rebuilt by replay.
pub fn trajectory_to_csv(model: &NetworkModel, traj: &Trajectory) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# metapop trajectory {CSV_VERSION}");
    let _ = writeln!(out, "# model {}", traj.model_id);
    let _ = writeln!(out, "# seed {} replica {}", traj.seed, traj.replica);
    let _ = writeln!(out, "# t-end {}", traj.t_end);
    out.push_str("record,t,i,j,xi,amount");
    for k in 1..=traj.x0.x.len() {
        let _ = write!(out, ",x{k}");
    }
    out.push('\n');
    push_row(&mut out, "init", traj.x0.t, None, &traj.x0.x);
    let posts = traj.event_states(model);
    let mut samples = traj.samples.iter().peekable();
    for (ev, x) in traj.events.iter().zip(&posts) {
        while let Some(s) = samples.next_if(|s| s.t <= ev.t) {
            push_row(&mut out, "sample", s.t, None, &s.x);
        }
        push_row(&mut out, "event", ev.t, Some((ev.edge, ev.xi, ev.amount)), x);
    }
    for s in samples {
        push_row(&mut out, "sample", s.t, None, &s.x);
    }
    push_row(&mut out, "final", traj.t_end, None, &traj.x_end);
    out
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("trajectory line {line}: {msg}"))
}

fn num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| bad(line, format!("bad {what} {s:?}")))
}

/// Reads the text form back.
pub fn trajectory_from_csv(text: &str) -> Result<Trajectory> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
    let mut header = |prefix: &str| -> Result<(usize, String)> {
        let (k, l) = lines.next().ok_or_else(|| bad(0, "truncated header"))?;
        l.strip_prefix(prefix).map(|r| (k, r.trim().to_string())).ok_or_else(|| bad(k, format!("expected {prefix:?}")))
    };
    let (k, v) = header("# metapop trajectory ")?;
    if num::<u32>(&v, k, "version")? != CSV_VERSION {
        return Err(bad(k, format!("unsupported version {v}")));
    }
    let (_, model_id) = header("# model ")?;
    let (k, seed_line) = header("# seed ")?;
    let (seed, replica) = seed_line
        .split_once(" replica ")
        .ok_or_else(|| bad(k, "expected seed and replica"))
        .and_then(|(s, r)| Ok((num(s, k, "seed")?, num(r, k, "replica")?)))?;
    let (k, t) = header("# t-end ")?;
    let t_end: f64 = num(&t, k, "t-end")?;
    let (k, cols) = header("record,t,i,j,xi,amount")?;
    let n = cols.split(',').filter(|c| !c.is_empty()).count();
    if n == 0 {
        return Err(bad(k, "no state columns"));
    }

    let mut x0 = None;
    let mut x_end = None;
    let mut events = Vec::new();
    let mut samples = Vec::new();
    for (k, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 + n {
            return Err(bad(k, format!("expected {} fields, found {}", 6 + n, f.len())));
        }
        let t: f64 = num(f[1], k, "time")?;
        let x = f[6..].iter().map(|v| num(v, k, "state")).collect::<Result<Vec<f64>>>()?;
        match f[0] {
            "init" => x0 = Some(State { x, t }),
            "final" => x_end = Some(x),
            "sample" => samples.push(Sample { t, x }),
            "event" => {
                let i: usize = num(f[2], k, "origin")?;
                let j: usize = num(f[3], k, "target")?;
                if i == 0 || j == 0 || i > n || j > n || i == j {
                    return Err(bad(k, format!("bad edge ({i},{j})")));
                }
                events.push(Event { t, edge: Edge::one_based(i, j), xi: num(f[4], k, "xi")?, amount: num(f[5], k, "amount")? });
            }
            other => return Err(bad(k, format!("unknown record {other:?}"))),
        }
    }
    Ok(Trajectory {
        model_id,
        seed,
        replica,
        x0: x0.ok_or_else(|| bad(0, "missing init row"))?,
        t_end,
        events,
        samples,
        x_end: x_end.ok_or_else(|| bad(0, "missing final row"))?,
    })
}

pub fn trajectory_to_json(traj: &Trajectory) -> Result<String> {
    serde_json::to_string_pretty(traj).map_err(|e| Error::Internal(e.to_string()))
}

pub fn trajectory_from_json(text: &str) -> Result<Trajectory> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_trajectory(model: &NetworkModel, traj: &Trajectory, path: &Path, format: Format) -> Result<()> {
    let text = match format {
        Format::Csv => trajectory_to_csv(model, traj),
        Format::Json => trajectory_to_json(traj)?,
    };
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads a trajectory, choosing the format from the file extension.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path)?;
    match Format::from_path(path)? {
        Format::Csv => trajectory_from_csv(&text),
        Format::Json => trajectory_from_json(&text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{builtin_model, Params};
    use crate::sim;

    fn sample_traj() -> (NetworkModel, Trajectory) {
        let m = builtin_model("constant-multiplicative", &Params::new()).unwrap();
        let tr = sim::simulate(&m, &[5.0, 5.0], 30.0, 42, Some(2.5)).unwrap();
        (m, tr)
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let (m, tr) = sample_traj();
        let text = trajectory_to_csv(&m, &tr);
        let back = trajectory_from_csv(&text).unwrap();
        assert_eq!(back, tr);
        assert_eq!(trajectory_to_csv(&m, &back), text);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let (_, tr) = sample_traj();
        let back = trajectory_from_json(&trajectory_to_json(&tr).unwrap()).unwrap();
        assert_eq!(back, tr);
    }

    #[test]
    fn files_round_trip() {
        let (m, tr) = sample_traj();
        let dir = tempfile::tempdir().unwrap();
        for f in [Format::Csv, Format::Json] {
            let p = dir.path().join(format!("t.{}", f.extension()));
            write_trajectory(&m, &tr, &p, f).unwrap();
            assert_eq!(read_trajectory(&p).unwrap(), tr);
        }
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let (m, tr) = sample_traj();
        let text = trajectory_to_csv(&m, &tr);
        assert!(trajectory_from_csv(&text.replace("event,", "evnt,")).is_err());
        assert!(trajectory_from_csv(&text.replace("# metapop trajectory 1", "# metapop trajectory 9")).is_err());
        let cut: String = text.lines().filter(|l| !l.starts_with("final")).map(|l| format!("{l}\n")).collect();
        assert!(trajectory_from_csv(&cut).is_err());
    }
}
