//! Array engine: many cells driven by voltage pulses and read out through a
//! noisy, finite-resolution ADC.
//!
//! Cells are stored as a flat `Vec<Cell>` plus one flat `f32` lag buffer of
//! `4 p` values per cell. Every cell owns a counter-based random stream keyed
//! by `(seed, cell index)`, so the result of any operation is independent of
//! how the cells are split across threads.

mod cell;
mod readout;
pub mod script;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cell::{Cell, Dynamics, Outcome, Phase};
pub use readout::{ReadoutConfig, Readout, K_B, Q_E};

use crate::conduction::ConductionModel;
use crate::exec::Execution;
use crate::linalg::{self, M4};
use crate::paramfile::ParameterBundle;
use crate::rng::{mix64, stream_key, CounterRng, Domain};
use crate::svar::{burn_in, normal4, StepKernel, SvarError, SvarModel};
use crate::transform::NormalizingMap;

#[derive(Debug, Error, PartialEq)]
pub enum ArrayError {
    #[error("cell count must be at least 1")]
    NoCells,
    #[error("DtD scale factor must be non-negative, got {0}")]
    NegativeScale(f64),
    #[error("DtD covariance is not positive definite")]
    CovarianceNotPd,
    #[error("cell index {index} out of range for {m} cells")]
    OutOfRange { index: usize, m: usize },
    #[error("amplitude vector has {got} entries for {m} cells")]
    LengthMismatch { got: usize, m: usize },
    #[error("invalid readout configuration: {0}")]
    Readout(String),
    #[error("no model of order {0} in the parameter bundle")]
    MissingOrder(usize),
    #[error(transparent)]
    Svar(#[from] SvarError),
}

/// How the lag history of each cell is seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum HistoryInit {
    /// Exact draw from the stationary distribution of the lag vector.
    #[default]
    Stationary,
    /// `p` innovation draws followed by `max(10 p, 500)` burn-in steps.
    BurnIn,
    /// All lags at the process mean (zero); no random draws.
    Mean,
}

/// Parameters of [`CellArray::new`].
#[derive(Debug, Clone)]
pub struct ArrayConfig {
    pub m: usize,
    /// DtD scale factor.
    pub a: f64,
    pub seed: u64,
    pub history: HistoryInit,
    pub exec: Execution,
}

impl ArrayConfig {
    pub fn new(m: usize, a: f64, seed: u64) -> Self {
        Self {
            m,
            a,
            seed,
            history: HistoryInit::default(),
            exec: Execution::sequential(),
        }
    }
}

/// Target of a pulse or read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    All,
    Index(usize),
    /// Inclusive range.
    Range(usize, usize),
}

impl Target {
    pub fn bounds(&self, m: usize) -> Result<(usize, usize), ArrayError> {
        let (lo, hi) = match *self {
            Target::All => return Ok((0, m)),
            Target::Index(i) => (i, i),
            Target::Range(a, b) => (a.min(b), a.max(b)),
        };
        if hi >= m {
            return Err(ArrayError::OutOfRange { index: hi, m });
        }
        Ok((lo, hi + 1))
    }
}

/// Outcome counts of a batch of pulses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseReport {
    pub noop: u64,
    pub set: u64,
    pub partial_reset: u64,
    pub full_reset: u64,
}

impl PulseReport {
    pub fn transitions(&self) -> u64 {
        self.set + self.partial_reset + self.full_reset
    }

    fn add(&mut self, o: Outcome) {
        match o {
            Outcome::NoOp => self.noop += 1,
            Outcome::Set => self.set += 1,
            Outcome::PartialReset => self.partial_reset += 1,
            Outcome::FullReset => self.full_reset += 1,
        }
    }
}

#[derive(Default)]
struct AtomicReport([AtomicU64; 4]);

impl AtomicReport {
    fn merge(&self, r: &PulseReport) {
        for (a, v) in self.0.iter().zip([r.noop, r.set, r.partial_reset, r.full_reset]) {
            a.fetch_add(v, Ordering::Relaxed);
        }
    }

    fn load(&self) -> PulseReport {
        let v: [u64; 4] = std::array::from_fn(|k| self.0[k].load(Ordering::Relaxed));
        PulseReport {
            noop: v[0],
            set: v[1],
            partial_reset: v[2],
            full_reset: v[3],
        }
    }
}

/// Immutable model parameters shared by all cells.
#[derive(Debug, Clone)]
pub struct Shared {
    pub dynamics: Dynamics,
    pub map: NormalizingMap,
    pub kernel: StepKernel,
    pub seed: u64,
}

impl Shared {
    #[inline]
    fn cell_key(&self, index: usize) -> u64 {
        stream_key(self.seed, Domain::Cell, index as u64)
    }

    /// Realize the scaled features of the next cycle of `cell`.
    #[inline]
    fn next_features(&self, key: u64, cell: &mut Cell, lags: &mut [f32]) -> [f64; 4] {
        let mut rng = CounterRng::new(key, &mut cell.rng_counter);
        let eps = normal4(&mut rng);
        let mut cursor = cell.cursor as usize;
        let x = self.kernel.step_ring(lags, &mut cursor, &eps);
        cell.cursor = cursor as u16;
        let y = self.map.inverse_array(&x);
        [
            y[0] * cell.scale[0] as f64,
            y[1] * cell.scale[1] as f64,
            y[2] * cell.scale[2] as f64,
            y[3] * cell.scale[3] as f64,
        ]
    }

    #[inline]
    fn pulse(&self, index: usize, cell: &mut Cell, lags: &mut [f32], u_a: f64) -> Outcome {
        self.dynamics.transition(cell, u_a, |c| self.next_features(self.cell_key(index), c, lags))
    }
}

pub struct CellArray {
    shared: Shared,
    cells: Vec<Cell>,
    lags: Vec<f32>,
    p: usize,
    read_epoch: u64,
    exec: Execution,
}

/// Lower Cholesky factor of `a * sigma`, or `None` for `a = 0`.
fn dtd_factor(sigma: &M4, a: f64) -> Result<Option<M4>, ArrayError> {
    if a < 0.0 || a.is_nan() {
        return Err(ArrayError::NegativeScale(a));
    }
    if a == 0.0 {
        return Ok(None);
    }
    let scaled = sigma.map(|row| row.map(|v| v * a));
    linalg::cholesky4(&scaled)
        .map(Some)
        .ok_or(ArrayError::CovarianceNotPd)
}

impl CellArray {
    /// Build an array from a parameter bundle using its model of order `p`.
    pub fn from_bundle(bundle: &ParameterBundle, p: usize, cfg: &ArrayConfig) -> Result<Self, ArrayError> {
        let model = bundle.model(p).ok_or(ArrayError::MissingOrder(p))?;
        Self::new(
            bundle.conduction.clone(),
            bundle.map.clone(),
            model,
            &bundle.sigma,
            bundle.defaults.u_max,
            cfg,
        )
    }

    /// Initialize `m` cells: DtD scales, lag history, and the features of the
    /// first cycle. Every cell starts in HRS.
    pub fn new(
        conduction: ConductionModel,
        map: NormalizingMap,
        model: &SvarModel,
        sigma: &M4,
        u_max: f64,
        cfg: &ArrayConfig,
    ) -> Result<Self, ArrayError> {
        if cfg.m == 0 {
            return Err(ArrayError::NoCells);
        }
        let factor = dtd_factor(sigma, cfg.a)?;
        let p = model.p;
        let history_chol: Option<Vec<f64>> = match cfg.history {
            HistoryInit::Stationary => {
                let g = model.stationary_covariance()?;
                let l = linalg::cholesky_lower(g).ok_or(ArrayError::CovarianceNotPd)?;
                // Row-major lower triangle.
                let d = 4 * p;
                let mut flat = vec![0.0; d * d];
                for r in 0..d {
                    for c in 0..=r {
                        flat[r * d + c] = l[(r, c)];
                    }
                }
                Some(flat)
            }
            _ => None,
        };
        let shared = Shared {
            dynamics: Dynamics { conduction, u_max },
            kernel: model.kernel(),
            map,
            seed: cfg.seed,
        };
        let median = shared.map.median();
        let mut cells = vec![Cell::new([1.0; 4]); cfg.m];
        let mut lags = vec![0.0f32; cfg.m * 4 * p];
        let history = cfg.history;
        cfg.exec.zip_chunks_mut(&mut cells, &mut lags, 4 * p, |base, cs, ls| {
            let mut h = vec![0.0; 4 * p];
            for (k, cell) in cs.iter_mut().enumerate() {
                let index = base + k;
                let key = shared.cell_key(index);
                let ring = &mut ls[4 * p * k..4 * p * (k + 1)];
                let mut rng = CounterRng::new(key, &mut cell.rng_counter);
                if let Some(l) = &factor {
                    let s_hat = linalg::mat_vec(l, &normal4(&mut rng));
                    let y = shared.map.inverse_array(&s_hat);
                    for j in 0..4 {
                        cell.scale[j] = (y[j] / median[j]) as f32;
                    }
                }
                match history {
                    HistoryInit::Mean => {}
                    HistoryInit::Stationary => {
                        let chol = history_chol.as_deref().unwrap();
                        let d = 4 * p;
                        let eps: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                        for r in 0..d {
                            let row = &chol[r * d..r * d + r + 1];
                            h[r] = row.iter().zip(&eps).map(|(a, b)| a * b).sum();
                        }
                        // Stacked vector is [x_{n-1}; ...; x_{n-p}]; slot j holds lag p - j.
                        for j in 0..p {
                            let lag = p - j;
                            for c in 0..4 {
                                ring[4 * j + c] = h[4 * (lag - 1) + c] as f32;
                            }
                        }
                    }
                    HistoryInit::BurnIn => {
                        let mut cursor = 0usize;
                        for _ in 0..p {
                            let u = shared.kernel.innovation(&normal4(&mut rng));
                            for c in 0..4 {
                                ring[4 * cursor + c] = u[c] as f32;
                            }
                            cursor = (cursor + 1) % p;
                        }
                        for _ in 0..burn_in(p) {
                            let eps = normal4(&mut rng);
                            shared.kernel.step_ring(ring, &mut cursor, &eps);
                        }
                        cell.cursor = cursor as u16;
                    }
                }
                let f = shared.next_features(key, cell, ring);
                cell.features = f.map(|v| v as f32);
                cell.phase = Phase::Hrs;
                cell.cycle = 1;
                cell.r = shared
                    .dynamics
                    .conduction
                    .state_from_resistance(cell.r_h())
                    .unwrap_or(1.0) as f32;
                cell.u_reset = cell.features[3];
            }
        });
        Ok(Self {
            shared,
            cells,
            lags,
            p,
            read_epoch: 0,
            exec: cfg.exec,
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn order(&self) -> usize {
        self.p
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, index: usize) -> &Cell {
        &self.cells[index]
    }

    pub fn shared(&self) -> &Shared {
        &self.shared
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn set_execution(&mut self, exec: Execution) {
        self.exec = exec;
    }

    /// Lag history of a cell in chronological order (oldest first).
    pub fn history(&self, index: usize) -> Vec<[f32; 4]> {
        let p = self.p;
        let ring = &self.lags[4 * p * index..4 * p * (index + 1)];
        let cursor = self.cells[index].cursor as usize;
        (0..p)
            .map(|k| {
                let slot = (cursor + k) % p;
                [ring[4 * slot], ring[4 * slot + 1], ring[4 * slot + 2], ring[4 * slot + 3]]
            })
            .collect()
    }

    /// Resident bytes per cell: the cell record plus its `f32` lag history.
    pub fn bytes_per_cell(&self) -> usize {
        std::mem::size_of::<Cell>() + 4 * self.p * std::mem::size_of::<f32>()
    }

    /// Static resistance of a cell at the reference voltage.
    pub fn static_resistance(&self, index: usize) -> f64 {
        self.shared
            .dynamics
            .conduction
            .static_resistance(self.cells[index].r as f64)
    }

    /// Apply the same pulse to every addressed cell.
    pub fn apply_pulse(&mut self, target: Target, u_a: f64) -> Result<PulseReport, ArrayError> {
        let (lo, hi) = target.bounds(self.len())?;
        Ok(self.apply_range(lo, hi, |_| u_a))
    }

    /// Apply one amplitude per cell.
    pub fn apply_pulses(&mut self, u_a: &[f64]) -> Result<PulseReport, ArrayError> {
        if u_a.len() != self.len() {
            return Err(ArrayError::LengthMismatch {
                got: u_a.len(),
                m: self.len(),
            });
        }
        Ok(self.apply_range(0, u_a.len(), |i| u_a[i]))
    }

    fn apply_range<F>(&mut self, lo: usize, hi: usize, amplitude: F) -> PulseReport
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        let p = self.p;
        let shared = &self.shared;
        let total = AtomicReport::default();
        let cells = &mut self.cells[lo..hi];
        let lags = &mut self.lags[4 * p * lo..4 * p * hi];
        self.exec.zip_chunks_mut(cells, lags, 4 * p, |base, cs, ls| {
            let mut report = PulseReport::default();
            for (k, cell) in cs.iter_mut().enumerate() {
                let index = lo + base + k;
                let ring = &mut ls[4 * p * k..4 * p * (k + 1)];
                report.add(shared.pulse(index, cell, ring, amplitude(index)));
            }
            total.merge(&report);
        });
        total.load()
    }

    /// Read every addressed cell. Each call uses a fresh read epoch so that
    /// repeated reads draw independent noise; cell state is never modified.
    pub fn read(&mut self, target: Target, cfg: &ReadoutConfig) -> Result<Vec<Readout>, ArrayError> {
        cfg.validate().map_err(ArrayError::Readout)?;
        let (lo, hi) = target.bounds(self.len())?;
        let epoch = self.read_epoch;
        self.read_epoch += 1;
        let mut out = vec![
            Readout {
                i_noisy: 0.0,
                code: 0,
                i_dequantized: 0.0
            };
            hi - lo
        ];
        read_into(&self.shared, &self.cells[lo..hi], lo, epoch, cfg, &self.exec, &mut out);
        Ok(out)
    }

    pub fn read_all(&mut self, cfg: &ReadoutConfig) -> Result<Vec<Readout>, ArrayError> {
        self.read(Target::All, cfg)
    }

    /// Read all cells into a caller-provided buffer (used by the benchmark).
    pub fn read_all_into(&mut self, cfg: &ReadoutConfig, out: &mut [Readout]) {
        let epoch = self.read_epoch;
        self.read_epoch += 1;
        read_into(&self.shared, &self.cells, 0, epoch, cfg, &self.exec, out);
    }

    /// Order-sensitive digest of all cell state and histories.
    pub fn state_digest(&self) -> u64 {
        let mut h = 0x5353_594e_u64;
        let mut feed = |v: u64| h = mix64(h ^ v).wrapping_add(v.rotate_left(23));
        for c in &self.cells {
            feed(c.rng_counter);
            for v in c.features.iter().chain(&c.scale) {
                feed(v.to_bits() as u64);
            }
            feed(((c.r.to_bits() as u64) << 32) | c.u_reset.to_bits() as u64);
            feed(((c.anchor_r.to_bits() as u64) << 32) | c.anchor_u.to_bits() as u64);
            feed(((c.cycle as u64) << 32) | ((c.cursor as u64) << 8) | c.phase as u64);
        }
        for pair in self.lags.chunks(2) {
            let a = pair[0].to_bits() as u64;
            let b = pair.get(1).map_or(0, |v| v.to_bits() as u64);
            feed((a << 32) | b);
        }
        h
    }

    /// CSV dump: `cell,cycle,phase,r,static_resistance`.
    pub fn write_state_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "cell,cycle,phase,r,static_resistance")?;
        for (i, c) in self.cells.iter().enumerate() {
            writeln!(
                w,
                "{i},{},{},{},{}",
                c.cycle,
                c.phase.as_str(),
                c.r,
                self.static_resistance(i)
            )?;
        }
        Ok(())
    }
}

fn read_into(
    shared: &Shared,
    cells: &[Cell],
    offset: usize,
    epoch: u64,
    cfg: &ReadoutConfig,
    exec: &Execution,
    out: &mut [Readout],
) {
    let cond = &shared.dynamics.conduction;
    let ih = cond.i_hhrs(cfg.u_read);
    let il = cond.i_llrs(cfg.u_read);
    let epoch_seed = shared.seed ^ mix64(epoch.wrapping_add(0x0E90_C400));
    exec.map_chunks(cells, out, |base, cs, os| {
        for (k, (c, o)) in cs.iter().zip(os.iter_mut()).enumerate() {
            let r = c.r as f64;
            let i_read = r * ih + (1.0 - r) * il;
            let z = if cfg.noise_enabled {
                let mut counter = 0u64;
                let key = stream_key(epoch_seed, Domain::Read, (offset + base + k) as u64);
                CounterRng::new(key, &mut counter).sample(StandardNormal)
            } else {
                0.0
            };
            *o = cfg.digitize(i_read, z);
        }
    });
}

#[cfg(test)]
mod tests;
