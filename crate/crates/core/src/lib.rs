//! Generative vector-autoregression model of stochastic resistive-memory
//! (ReRAM) synapses.
//!
//! The crate covers the full pipeline:
//!
//! * [`waveform`]: ingest raw cycling traces, smooth, split into cycles and
//!   extract one [`FeatureVector`] per cycle.
//! * [`transform`]: the polynomial quantile map between feature marginals and
//!   standard-normal marginals.
//! * [`svar`]: structural VAR(p) fitting and generation.
//! * [`conduction`]: the two-polynomial mixture conduction model.
//! * [`array`]: the runtime engine simulating millions of cells under voltage
//!   pulses with noisy, quantized readouts.
//! * [`stats`], [`paramfile`], [`fit`], [`synth`], [`bench`]: validation
//!   statistics, persistence, fitting pipeline, synthetic ground truth and the
//!   throughput harness.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default) and fall back to plain iterators otherwise.

pub mod array;
pub mod bench;
pub mod conduction;
pub mod exec;
pub mod fit;
pub mod linalg;
pub mod paramfile;
pub mod poly;
pub mod rng;
pub mod stats;
pub mod svar;
pub mod synth;
pub mod transform;
pub mod waveform;

pub use array::{CellArray, Phase, ReadoutConfig};
pub use conduction::{ConductionModel, ResetCurve};
pub use exec::Execution;
pub use paramfile::ParameterBundle;
pub use svar::SvarModel;
pub use transform::NormalizingMap;
pub use waveform::{FeatureVector, RawTrace};

/// Number of per-cycle features (R_H, U_S, R_L, U_R).
pub const N_FEATURES: usize = 4;

/// Short feature names in storage order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = ["r_h", "u_s", "r_l", "u_r"];
