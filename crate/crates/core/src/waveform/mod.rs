//! Raw cycling waveforms and per-cycle feature extraction.

mod extract;
pub mod io;
pub mod peaks;
mod smooth;
mod split;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::{
    extract_features, extract_reset_voltage, extract_set_voltage, fit_state_polynomials,
    CycleFit, ExcludedCycle, ExtractConfig, Extraction, ExtractionReport, StateFit,
};
pub use smooth::{detect_set_locations, smooth_adaptive, window_at, SetDetection, SmoothConfig};
pub use split::{split_cycles, CycleSplit};

/// Nominal number of samples per cycle of the measurement setup.
pub const DEFAULT_SAMPLES_PER_CYCLE: usize = 1042;

#[derive(Debug, Error)]
pub enum WaveformError {
    #[error("trace is empty")]
    Empty,
    #[error("u and i have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("current never crosses the SET threshold")]
    NoSetCrossing,
    #[error("no peak on the positive increasing sweep")]
    NoResetPeak,
    #[error("{window} fit window has {got} points, need at least {needed}")]
    InsufficientPoints {
        window: &'static str,
        got: usize,
        needed: usize,
    },
    #[error("fitted {0} polynomial gives a non-positive static resistance")]
    NonPositiveResistance(&'static str),
    #[error("{excluded} of {total} cycles were excluded")]
    TooManyExcluded { excluded: usize, total: usize },
    #[error("no complete cycle found")]
    NoCycles,
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Sampled voltage/current waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrace {
    pub u: Vec<f64>,
    pub i: Vec<f64>,
    pub samples_per_cycle: usize,
}

impl RawTrace {
    pub fn new(u: Vec<f64>, i: Vec<f64>, samples_per_cycle: usize) -> Result<Self, WaveformError> {
        if u.len() != i.len() {
            return Err(WaveformError::LengthMismatch(u.len(), i.len()));
        }
        Ok(Self {
            u,
            i,
            samples_per_cycle,
        })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// Per-cycle features in chronological order: HRS resistance, SET voltage
/// magnitude, LRS resistance, RESET voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub r_h: f64,
    pub u_s: f64,
    pub r_l: f64,
    pub u_r: f64,
}

impl FeatureVector {
    pub fn new(r_h: f64, u_s: f64, r_l: f64, u_r: f64) -> Self {
        Self { r_h, u_s, r_l, u_r }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.r_h, self.u_s, self.r_l, self.u_r]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    /// All components strictly positive and finite.
    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| *v > 0.0 && v.is_finite())
    }
}
