//! Pulse and readout scripts.
//!
//! Pulse script CSV: `step,target,u_a`. Readout script CSV: `step,target`.
//! A target is `all`, a cell index, or an inclusive range `a-b`. Within one
//! step all pulses are applied (in file order) before any read.

use std::io::{Read, Write};

use thiserror::Error;

use super::{ArrayError, CellArray, ReadoutConfig, Readout, Target};

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Array(#[from] ArrayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Pulse(Target, f64),
    Read(Target),
}

/// Actions ordered by step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Script {
    pub actions: Vec<(u64, Action)>,
}

pub fn parse_target(s: &str) -> Option<Target> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("all") {
        return Some(Target::All);
    }
    if let Some((a, b)) = s.split_once('-') {
        return Some(Target::Range(a.trim().parse().ok()?, b.trim().parse().ok()?));
    }
    s.parse().ok().map(Target::Index)
}

fn records<R: Read>(input: R, columns: &[&str]) -> Result<Vec<(usize, Vec<String>)>, ScriptError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers.iter().position(|h| h == *c).ok_or_else(|| ScriptError::Parse {
                line: 1,
                msg: format!("missing column `{c}`"),
            })
        })
        .collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.push((k + 2, idx.iter().map(|&i| rec.get(i).unwrap_or("").to_string()).collect()));
    }
    Ok(out)
}

fn parse_err(line: usize, msg: impl Into<String>) -> ScriptError {
    ScriptError::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn parse_pulse_script<R: Read>(input: R) -> Result<Vec<(u64, Target, f64)>, ScriptError> {
    records(input, &["step", "target", "u_a"])?
        .into_iter()
        .map(|(line, f)| {
            let step = f[0].parse().map_err(|_| parse_err(line, format!("bad step `{}`", f[0])))?;
            let target = parse_target(&f[1]).ok_or_else(|| parse_err(line, format!("bad target `{}`", f[1])))?;
            let u: f64 = f[2].parse().map_err(|_| parse_err(line, format!("bad amplitude `{}`", f[2])))?;
            if !u.is_finite() {
                return Err(parse_err(line, "amplitude must be finite"));
            }
            Ok((step, target, u))
        })
        .collect()
}

pub fn parse_read_script<R: Read>(input: R) -> Result<Vec<(u64, Target)>, ScriptError> {
    records(input, &["step", "target"])?
        .into_iter()
        .map(|(line, f)| {
            let step = f[0].parse().map_err(|_| parse_err(line, format!("bad step `{}`", f[0])))?;
            let target = parse_target(&f[1]).ok_or_else(|| parse_err(line, format!("bad target `{}`", f[1])))?;
            Ok((step, target))
        })
        .collect()
}

impl Script {
    pub fn from_parts(pulses: &[(u64, Target, f64)], reads: &[(u64, Target)]) -> Self {
        let mut actions: Vec<(u64, Action)> = pulses
            .iter()
            .map(|&(s, t, u)| (s, Action::Pulse(t, u)))
            .chain(reads.iter().map(|&(s, t)| (s, Action::Read(t))))
            .collect();
        // Stable: keeps file order; pulses precede reads within a step.
        actions.sort_by_key(|(s, a)| (*s, matches!(a, Action::Read(_))));
        Self { actions }
    }

    pub fn pulse_count(&self) -> usize {
        self.actions.iter().filter(|(_, a)| matches!(a, Action::Pulse(..))).count()
    }

    /// Write the pulse part as a pulse-script CSV.
    pub fn write_pulses<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,target,u_a")?;
        for (s, a) in &self.actions {
            if let Action::Pulse(t, u) = a {
                writeln!(w, "{s},{},{u}", target_str(t))?;
            }
        }
        Ok(())
    }
}

pub fn target_str(t: &Target) -> String {
    match t {
        Target::All => "all".into(),
        Target::Index(i) => i.to_string(),
        Target::Range(a, b) => format!("{a}-{b}"),
    }
}

/// Triangular envelope sampled with `n` pulses from 0 to `peak` and back
/// (the zero endpoints are omitted).
fn half_wave(peak: f64, n: usize) -> impl Iterator<Item = f64> {
    let n = n.max(1);
    (1..=n).chain((1..n).rev()).map(move |k| peak * k as f64 / n as f64)
}

/// Full-range cycling: each cycle is a negative then a positive triangular
/// half wave reaching `u_neg` and `u_pos`, with all cells read after every
/// pulse.
pub fn full_cycling(cycles: usize, pulses_per_half: usize, u_neg: f64, u_pos: f64) -> Script {
    let mut actions = Vec::new();
    let mut step = 0u64;
    for _ in 0..cycles {
        for u in half_wave(u_neg, pulses_per_half).chain(half_wave(u_pos, pulses_per_half)) {
            actions.push((step, Action::Pulse(Target::All, u)));
            actions.push((step, Action::Read(Target::All)));
            step += 1;
        }
    }
    Script { actions }
}

/// Multilevel programming: one cycle per entry of `levels`, each a negative
/// half wave to `u_neg` followed by a positive half wave whose peak is the
/// level, with all cells read at the end of the cycle.
pub fn multilevel(levels: &[f64], pulses_per_half: usize, u_neg: f64) -> Script {
    let mut actions = Vec::new();
    let mut step = 0u64;
    for &level in levels {
        for u in half_wave(u_neg, pulses_per_half).chain(half_wave(level, pulses_per_half)) {
            actions.push((step, Action::Pulse(Target::All, u)));
            step += 1;
        }
        actions.push((step - 1, Action::Read(Target::All)));
    }
    Script { actions }
}

/// `n` levels evenly spaced from `from` to `to`.
pub fn ramp_levels(from: f64, to: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![to];
    }
    (0..n).map(|k| from + (to - from) * k as f64 / (n - 1) as f64).collect()
}

/// One read result of a script run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadRow {
    pub step: u64,
    pub cell: usize,
    pub readout: Readout,
}

/// Execute a script; `sink` receives every read row in order.
pub fn run_script<F>(
    array: &mut CellArray,
    script: &Script,
    cfg: &ReadoutConfig,
    mut sink: F,
) -> Result<super::PulseReport, ScriptError>
where
    F: FnMut(ReadRow) -> std::io::Result<()>,
{
    let mut total = super::PulseReport::default();
    for (step, action) in &script.actions {
        match *action {
            Action::Pulse(t, u) => {
                let r = array.apply_pulse(t, u)?;
                total.noop += r.noop;
                total.set += r.set;
                total.partial_reset += r.partial_reset;
                total.full_reset += r.full_reset;
            }
            Action::Read(t) => {
                let (lo, _) = t.bounds(array.len())?;
                for (k, readout) in array.read(t, cfg)?.into_iter().enumerate() {
                    sink(ReadRow {
                        step: *step,
                        cell: lo + k,
                        readout,
                    })?;
                }
            }
        }
    }
    Ok(total)
}

pub const READ_CSV_HEADER: &str = "step,cell,i_noisy,code,i_dequantized";

pub fn write_read_row<W: Write>(w: &mut W, row: &ReadRow) -> std::io::Result<()> {
    writeln!(
        w,
        "{},{},{},{},{}",
        row.step, row.cell, row.readout.i_noisy, row.readout.code, row.readout.i_dequantized
    )
}
