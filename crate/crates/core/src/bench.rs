//! Throughput harness for whole-array writes and reads.
//!
//! The pulse schedule and the output buffers are prepared before timing
//! starts; only `apply_pulse` / `read_all_into` calls are timed.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::array::{ArrayConfig, ArrayError, CellArray, HistoryInit, Readout, ReadoutConfig, Target};
use crate::exec::Execution;
use crate::paramfile::ParameterBundle;

/// Amplitude of the alternating benchmark pulses (V).
pub const BENCH_AMPLITUDE: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchMode {
    Write,
    Read,
}

impl BenchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchMode::Write => "write",
            BenchMode::Read => "read",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub mode: BenchMode,
    pub m: usize,
    pub p: usize,
    pub threads: usize,
    /// Cell operations performed.
    pub ops: u64,
    pub seconds: f64,
}

impl BenchResult {
    pub fn ops_per_second(&self) -> f64 {
        self.ops as f64 / self.seconds
    }
}

pub const CSV_HEADER: &str = "mode,m,p,threads,ops,seconds,ops_per_second";

pub fn write_csv_row<W: Write>(w: &mut W, r: &BenchResult) -> std::io::Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{:.6},{:.1}",
        r.mode.as_str(),
        r.m,
        r.p,
        r.threads,
        r.ops,
        r.seconds,
        r.ops_per_second()
    )
}

/// Alternating `-1.5, +1.5, ...` schedule of `n` pulses; every pulse drives
/// each cell through a transition (SET, then full RESET).
pub fn alternating_schedule(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| if k % 2 == 0 { -BENCH_AMPLITUDE } else { BENCH_AMPLITUDE })
        .collect()
}

/// Array for benchmarking; the lag history starts at the process mean since
/// its content does not affect throughput.
pub fn bench_array(bundle: &ParameterBundle, m: usize, p: usize, seed: u64, exec: Execution) -> Result<CellArray, ArrayError> {
    let mut cfg = ArrayConfig::new(m, bundle.defaults.a, seed);
    cfg.history = HistoryInit::Mean;
    cfg.exec = exec;
    CellArray::from_bundle(bundle, p, &cfg)
}

pub fn time_writes(array: &mut CellArray, schedule: &[f64]) -> Result<BenchResult, ArrayError> {
    let start = Instant::now();
    let mut transitions = 0;
    for &u in schedule {
        transitions += array.apply_pulse(Target::All, u)?.transitions();
    }
    let seconds = start.elapsed().as_secs_f64();
    if transitions < (schedule.len() * array.len()) as u64 {
        log::debug!("{transitions} transitions for {} cell pulses", schedule.len() * array.len());
    }
    Ok(BenchResult {
        mode: BenchMode::Write,
        m: array.len(),
        p: array.order(),
        threads: array.execution().threads,
        ops: (schedule.len() * array.len()) as u64,
        seconds,
    })
}

pub fn time_reads(array: &mut CellArray, cfg: &ReadoutConfig, repetitions: usize) -> BenchResult {
    let mut out = vec![
        Readout {
            i_noisy: 0.0,
            code: 0,
            i_dequantized: 0.0
        };
        array.len()
    ];
    let start = Instant::now();
    for _ in 0..repetitions {
        array.read_all_into(cfg, &mut out);
    }
    let seconds = start.elapsed().as_secs_f64();
    std::hint::black_box(&out);
    BenchResult {
        mode: BenchMode::Read,
        m: array.len(),
        p: array.order(),
        threads: array.execution().threads,
        ops: (repetitions * array.len()) as u64,
        seconds,
    }
}
