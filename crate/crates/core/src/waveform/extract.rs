use serde::{Deserialize, Serialize};

use super::peaks::select_peak;
use super::smooth::{detect_set_locations, smooth_adaptive, SmoothConfig};
use super::split::split_cycles;
use super::{FeatureVector, RawTrace, WaveformError, DEFAULT_SAMPLES_PER_CYCLE};
use crate::conduction::{DEFAULT_U0, DEFAULT_U_MAX, HHRS_DEGREE, LLRS_DEGREE, MIN_LINEAR_COEFF};
use crate::exec::Execution;
use crate::poly::{self, FitError};

/// Thresholds and fit windows of the extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub samples_per_cycle: usize,
    pub smoothing: bool,
    pub max_window: usize,
    pub min_window: usize,
    pub ramp_span: usize,
    /// Current level defining the SET voltage (A).
    pub set_threshold: f64,
    /// Minimum prominence of the RESET peak (A).
    pub reset_prominence: f64,
    /// HRS window: `U` from `-U_S + hrs_offset` to `hrs_u_max`.
    pub hrs_offset: f64,
    pub hrs_u_max: f64,
    pub hrs_i_range: (f64, f64),
    /// LRS window: `U` from `lrs_u_min` to `U_R - lrs_offset`.
    pub lrs_u_min: f64,
    pub lrs_offset: f64,
    pub lrs_i_range: (f64, f64),
    pub min_points: usize,
    pub u0: f64,
    /// Extraction fails when more than this fraction of cycles is excluded.
    pub max_excluded_fraction: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            samples_per_cycle: DEFAULT_SAMPLES_PER_CYCLE,
            smoothing: true,
            max_window: 25,
            min_window: 3,
            ramp_span: 25,
            set_threshold: -50e-6,
            reset_prominence: 5e-6,
            hrs_offset: 0.1,
            hrs_u_max: DEFAULT_U_MAX,
            hrs_i_range: (-25e-6, 80e-6),
            lrs_u_min: -0.7,
            lrs_offset: 0.05,
            lrs_i_range: (-80e-6, 120e-6),
            min_points: 8,
            u0: DEFAULT_U0,
            max_excluded_fraction: 0.5,
        }
    }
}

impl ExtractConfig {
    pub fn smooth_config(&self) -> SmoothConfig {
        SmoothConfig {
            max_window: self.max_window,
            min_window: self.min_window,
            ramp_span: self.ramp_span,
        }
    }
}

/// Per-cycle HRS/LRS polynomial fits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFit {
    pub r_h: f64,
    pub r_l: f64,
    pub hrs_coeffs: Vec<f64>,
    pub lrs_coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleFit {
    pub cycle: usize,
    pub r_h: f64,
    pub r_l: f64,
    pub hrs: Vec<f64>,
    pub lrs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedCycle {
    pub cycle: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub total_cycles: usize,
    pub extracted: usize,
    pub excluded: Vec<ExcludedCycle>,
    pub leading_samples: usize,
    pub trailing_samples_dropped: usize,
    pub set_locations_missing: usize,
}

#[derive(Debug, Clone)]
pub struct Extraction {
    /// Cycle index and features of every extracted cycle.
    pub features: Vec<(usize, FeatureVector)>,
    pub fits: Vec<CycleFit>,
    pub report: ExtractionReport,
}

impl Extraction {
    pub fn vectors(&self) -> Vec<FeatureVector> {
        self.features.iter().map(|(_, f)| *f).collect()
    }
}

fn argmin(u: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in u.iter().enumerate() {
        if v < u[best] {
            best = k;
        }
    }
    best
}

/// Magnitude of the linearly interpolated `U` at the first downward crossing
/// of `threshold`.
pub fn extract_set_voltage(u: &[f64], i: &[f64], threshold: f64) -> Result<f64, WaveformError> {
    for k in 1..i.len() {
        if i[k - 1] > threshold && i[k] <= threshold {
            let t = (threshold - i[k - 1]) / (i[k] - i[k - 1]);
            let v = u[k - 1] + t * (u[k] - u[k - 1]);
            return Ok(v.abs());
        }
    }
    Err(WaveformError::NoSetCrossing)
}

/// `U` at the RESET peak of the positive part of the increasing sweep.
pub fn extract_reset_voltage(u: &[f64], i: &[f64], min_prominence: f64) -> Result<f64, WaveformError> {
    let bottom = argmin(u);
    let start = (bottom..u.len()).find(|&k| u[k] > 0.0).ok_or(WaveformError::NoResetPeak)?;
    let mut end = start + 1;
    while end < u.len() && u[end] >= u[end - 1] {
        end += 1;
    }
    let k = select_peak(&i[start..end], min_prominence).ok_or(WaveformError::NoResetPeak)?;
    Ok(u[start + k])
}

fn fit_window(
    u: &[f64],
    i: &[f64],
    u_range: (f64, f64),
    i_range: (f64, f64),
    degree: usize,
    min_points: usize,
    window: &'static str,
) -> Result<Vec<f64>, WaveformError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&uk, &ik) in u.iter().zip(i) {
        if uk >= u_range.0 && uk <= u_range.1 && ik >= i_range.0 && ik <= i_range.1 {
            xs.push(uk);
            ys.push(ik);
        }
    }
    poly::fit_through_origin(&xs, &ys, degree, MIN_LINEAR_COEFF, min_points).map_err(|e| match e {
        FitError::InsufficientPoints { got, needed, .. } => WaveformError::InsufficientPoints {
            window,
            got,
            needed,
        },
        _ => WaveformError::InsufficientPoints {
            window,
            got: xs.len(),
            needed: min_points,
        },
    })
}

/// Constrained HRS (degree 5, decreasing sweep) and LRS (degree 3, increasing
/// sweep) fits and their static resistances at `u0`.
pub fn fit_state_polynomials(
    u: &[f64],
    i: &[f64],
    u_s: f64,
    u_r: f64,
    cfg: &ExtractConfig,
) -> Result<StateFit, WaveformError> {
    let bottom = argmin(u);
    let hrs = fit_window(
        &u[..=bottom],
        &i[..=bottom],
        (-u_s + cfg.hrs_offset, cfg.hrs_u_max),
        cfg.hrs_i_range,
        HHRS_DEGREE,
        cfg.min_points,
        "HRS",
    )?;
    let lrs = fit_window(
        &u[bottom..],
        &i[bottom..],
        (cfg.lrs_u_min, u_r - cfg.lrs_offset),
        cfg.lrs_i_range,
        LLRS_DEGREE,
        cfg.min_points,
        "LRS",
    )?;
    let r_h = cfg.u0 / poly::horner(&hrs, cfg.u0);
    let r_l = cfg.u0 / poly::horner(&lrs, cfg.u0);
    if !(r_h > 0.0 && r_h.is_finite()) {
        return Err(WaveformError::NonPositiveResistance("HRS"));
    }
    if !(r_l > 0.0 && r_l.is_finite()) {
        return Err(WaveformError::NonPositiveResistance("LRS"));
    }
    Ok(StateFit {
        r_h,
        r_l,
        hrs_coeffs: hrs,
        lrs_coeffs: lrs,
    })
}

fn extract_cycle(u: &[f64], i: &[f64], cfg: &ExtractConfig) -> Result<(FeatureVector, StateFit), WaveformError> {
    let u_s = extract_set_voltage(u, i, cfg.set_threshold)?;
    let u_r = extract_reset_voltage(u, i, cfg.reset_prominence)?;
    let fit = fit_state_polynomials(u, i, u_s, u_r, cfg)?;
    Ok((FeatureVector::new(fit.r_h, u_s, fit.r_l, u_r), fit))
}

/// Split, smooth and extract one feature vector per cycle.
pub fn extract_features(
    trace: &RawTrace,
    cfg: &ExtractConfig,
    exec: &Execution,
) -> Result<Extraction, WaveformError> {
    if trace.is_empty() {
        return Err(WaveformError::Empty);
    }
    let mut trace = trace.clone();
    trace.samples_per_cycle = cfg.samples_per_cycle;
    let split = split_cycles(&trace);
    if split.cycles.is_empty() {
        return Err(WaveformError::NoCycles);
    }
    let detection = detect_set_locations(&trace, cfg.set_threshold);
    let smoothed = if cfg.smoothing {
        smooth_adaptive(&trace, &detection.indices, &cfg.smooth_config())
    } else {
        trace
    };
    let results = exec.map_indices(split.cycles.len(), |c| {
        let r = split.cycles[c].clone();
        extract_cycle(&smoothed.u[r.clone()], &smoothed.i[r], cfg)
    });
    let total = results.len();
    let mut features = Vec::with_capacity(total);
    let mut fits = Vec::with_capacity(total);
    let mut excluded = Vec::new();
    for (cycle, res) in results.into_iter().enumerate() {
        match res {
            Ok((f, s)) => {
                features.push((cycle, f));
                fits.push(CycleFit {
                    cycle,
                    r_h: s.r_h,
                    r_l: s.r_l,
                    hrs: s.hrs_coeffs,
                    lrs: s.lrs_coeffs,
                });
            }
            Err(e) => excluded.push(ExcludedCycle {
                cycle,
                reason: e.to_string(),
            }),
        }
    }
    if excluded.len() as f64 > cfg.max_excluded_fraction * total as f64 {
        return Err(WaveformError::TooManyExcluded {
            excluded: excluded.len(),
            total,
        });
    }
    if !excluded.is_empty() {
        log::info!("excluded {} of {} cycles", excluded.len(), total);
    }
    Ok(Extraction {
        report: ExtractionReport {
            total_cycles: total,
            extracted: features.len(),
            excluded,
            leading_samples: split.leading,
            trailing_samples_dropped: split.trailing_dropped,
            set_locations_missing: detection.missing,
        },
        features,
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_voltage_exact_sample() {
        let u = [-0.7, -0.8, -0.85, -0.9];
        let i = [-10e-6, -20e-6, -50e-6, -90e-6];
        assert!((extract_set_voltage(&u, &i, -50e-6).unwrap() - 0.85).abs() < 1e-15);
    }

    #[test]
    fn set_voltage_interpolated() {
        let u = [-0.7, -0.8, -0.9];
        let i = [-10e-6, -40e-6, -60e-6];
        assert!((extract_set_voltage(&u, &i, -50e-6).unwrap() - 0.85).abs() < 1e-12);
        assert!(extract_set_voltage(&u, &[0.0; 3], -50e-6).is_err());
    }

    #[test]
    fn reset_voltage_single_bump() {
        // Decreasing to -1, then increasing with a bump at 0.72 V.
        let mut u = Vec::new();
        let mut i = Vec::new();
        for k in 0..=100 {
            let v = 1.0 - 2.0 * k as f64 / 100.0;
            u.push(v);
            i.push(0.0);
        }
        for k in 1..=250 {
            let v = -1.0 + 2.5 * k as f64 / 250.0;
            u.push(v);
            let bump = if v > 0.0 { (20e-6 - (v - 0.72).abs() * 60e-6).max(0.0) } else { 0.0 };
            i.push(bump);
        }
        let ur = extract_reset_voltage(&u, &i, 5e-6).unwrap();
        assert!((ur - 0.72).abs() < 1e-12);
    }

    #[test]
    fn ohmic_lrs_and_active_bound() {
        let cfg = ExtractConfig::default();
        // Decreasing 1.5 -> -1.5 in HRS (a pure cubic whose unconstrained
        // linear term is negative), then increasing in a 10 kOhm LRS.
        let mut u = Vec::new();
        let mut i = Vec::new();
        for k in 0..=300 {
            let v = 1.5 - k as f64 * 0.01;
            u.push(v);
            i.push(-1e-8 * v + 5e-6 * v * v * v);
        }
        for k in 1..=300 {
            let v = -1.5 + k as f64 * 0.01;
            u.push(v);
            i.push(v / 10e3);
        }
        let fit = fit_state_polynomials(&u, &i, 0.85, 0.72, &cfg).unwrap();
        assert!((fit.r_l - 10e3).abs() < 1e-6);
        assert!((fit.lrs_coeffs[1] - 1e-4).abs() < 1e-15);
        assert!(fit.lrs_coeffs[2].abs() < 1e-15 && fit.lrs_coeffs[3].abs() < 1e-15);
        assert_eq!(fit.hrs_coeffs[1], 1e-9);
    }

    #[test]
    fn empty_trace_is_an_error() {
        let t = RawTrace::new(vec![], vec![], 1042).unwrap();
        assert!(matches!(
            extract_features(&t, &ExtractConfig::default(), &Execution::sequential()),
            Err(WaveformError::Empty)
        ));
    }
}
