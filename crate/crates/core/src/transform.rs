//! Normalizing map between feature marginals and standard-normal marginals.
//!
//! For each feature `k`, `gamma_k` is a polynomial in a standard-normal
//! quantile `z` returning the log-feature quantile. The inverse map
//! `x_k = exp(gamma_k(z_k))` turns normal deviates into features; the forward
//! map solves `gamma_k(z) = ln x_k` numerically.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::poly;
use crate::waveform::FeatureVector;
use crate::FEATURE_NAMES;

/// Default polynomial degree of each `gamma_k`.
pub const DEFAULT_DEGREE: usize = 5;
/// Half-width of the region on which monotonicity is checked; generated
/// deviates are clamped to it.
pub const Z_LIMIT: f64 = 4.0;
/// Number of quantile probabilities used by the fit.
pub const N_QUANTILES: usize = 500;
pub const P_LOW: f64 = 0.01;
pub const P_HIGH: f64 = 0.99;
/// Spacing of the monotonicity grid.
pub const MONOTONE_STEP: f64 = 1e-3;
/// Minimum number of feature vectors accepted by [`fit_map`].
pub const MIN_SAMPLES: usize = 1000;

const FORWARD_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("need at least {MIN_SAMPLES} feature vectors, got {0}")]
    TooFewSamples(usize),
    #[error("feature {feature} has a non-positive or non-finite value")]
    BadValue { feature: &'static str },
    #[error("degree must be in 1..=5, got {0}")]
    BadDegree(usize),
    #[error("map for {feature} is not increasing at z = {z:.3}")]
    NonMonotonic { feature: &'static str, z: f64 },
    #[error("map for {feature} is not finite at z = {z:.3}")]
    NonFinite { feature: &'static str, z: f64 },
    #[error("least-squares fit failed for {feature}: {msg}")]
    Fit { feature: &'static str, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizingMap {
    /// Ascending coefficients of `gamma_1 .. gamma_4`; unused higher orders are 0.
    pub gamma: [[f64; 6]; 4],
}

/// Result of the forward map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forward {
    pub z: [f64; 4],
    /// Components whose input fell outside the image of `[-4, 4]`; their `z`
    /// is the nearer endpoint.
    pub clamped: [bool; 4],
}

impl Forward {
    pub fn any_clamped(&self) -> bool {
        self.clamped.iter().any(|&c| c)
    }
}

/// Type-7 empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty sample");
    let h = (n - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// The fit probabilities `0.01 + j * 0.98 / 499`.
pub fn fit_probabilities() -> Vec<f64> {
    (0..N_QUANTILES)
        .map(|j| P_LOW + j as f64 * (P_HIGH - P_LOW) / (N_QUANTILES - 1) as f64)
        .collect()
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Fit the map with the default degree.
pub fn fit_map(features: &[FeatureVector]) -> Result<NormalizingMap, TransformError> {
    fit_map_with_degree(features, DEFAULT_DEGREE)
}

pub fn fit_map_with_degree(features: &[FeatureVector], degree: usize) -> Result<NormalizingMap, TransformError> {
    fit_map_with_degrees(features, [degree; 4])
}

/// Sorted log values of every feature, validated.
fn sorted_logs(features: &[FeatureVector]) -> Result<[Vec<f64>; 4], TransformError> {
    if features.len() < MIN_SAMPLES {
        return Err(TransformError::TooFewSamples(features.len()));
    }
    let mut logs: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(features.len()));
    for f in features {
        for (k, v) in f.to_array().into_iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TransformError::BadValue {
                    feature: FEATURE_NAMES[k],
                });
            }
            logs[k].push(v.ln());
        }
    }
    for l in logs.iter_mut() {
        l.sort_by(f64::total_cmp);
    }
    Ok(logs)
}

fn fit_component(sorted: &[f64], k: usize, degree: usize) -> Result<[f64; 6], TransformError> {
    if !(1..=5).contains(&degree) {
        return Err(TransformError::BadDegree(degree));
    }
    let probs = fit_probabilities();
    let z: Vec<f64> = probs.iter().map(|&p| normal_quantile(p)).collect();
    let q: Vec<f64> = probs.iter().map(|&p| quantile_sorted(sorted, p)).collect();
    let c = poly::fit_least_squares(&z, &q, degree).map_err(|e| TransformError::Fit {
        feature: FEATURE_NAMES[k],
        msg: e.to_string(),
    })?;
    let mut out = [0.0; 6];
    out[..c.len()].copy_from_slice(&c);
    Ok(out)
}

/// Fit each `gamma_k` with its own degree; any monotonicity failure is an
/// error.
pub fn fit_map_with_degrees(features: &[FeatureVector], degrees: [usize; 4]) -> Result<NormalizingMap, TransformError> {
    if let Some(&d) = degrees.iter().find(|d| !(1..=5).contains(*d)) {
        return Err(TransformError::BadDegree(d));
    }
    let logs = sorted_logs(features)?;
    let mut gamma = [[0.0; 6]; 4];
    for k in 0..4 {
        gamma[k] = fit_component(&logs[k], k, degrees[k])?;
    }
    let map = NormalizingMap { gamma };
    map.check()?;
    Ok(map)
}

/// For each feature, the highest degree up to `max_degree` whose polynomial
/// passes the monotonicity check. Returns the map and the degrees used.
pub fn fit_map_descending(
    features: &[FeatureVector],
    max_degree: usize,
) -> Result<(NormalizingMap, [usize; 4]), TransformError> {
    if !(1..=5).contains(&max_degree) {
        return Err(TransformError::BadDegree(max_degree));
    }
    let logs = sorted_logs(features)?;
    let mut gamma = [[0.0; 6]; 4];
    let mut degrees = [0; 4];
    for k in 0..4 {
        let mut last_err = None;
        for d in (1..=max_degree).rev() {
            let c = fit_component(&logs[k], k, d)?;
            match check_component(k, &c) {
                Ok(()) => {
                    gamma[k] = c;
                    degrees[k] = d;
                    last_err = None;
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        if let Some(e) = last_err {
            return Err(e);
        }
    }
    Ok((NormalizingMap { gamma }, degrees))
}

fn check_component(k: usize, c: &[f64; 6]) -> Result<(), TransformError> {
    let name = FEATURE_NAMES[k];
    let steps = (2.0 * Z_LIMIT / MONOTONE_STEP).round() as usize;
    for j in 0..=steps {
        let z = -Z_LIMIT + j as f64 * MONOTONE_STEP;
        let (v, d) = poly::horner_with_derivative(c, z);
        if !v.exp().is_finite() || !v.is_finite() {
            return Err(TransformError::NonFinite { feature: name, z });
        }
        if !(d > 0.0) {
            return Err(TransformError::NonMonotonic { feature: name, z });
        }
    }
    Ok(())
}

impl NormalizingMap {
    /// Map with `gamma_k(z) = mu_k + s_k z`.
    pub fn lognormal(mu: [f64; 4], s: [f64; 4]) -> Self {
        let mut gamma = [[0.0; 6]; 4];
        for k in 0..4 {
            gamma[k][0] = mu[k];
            gamma[k][1] = s[k];
        }
        Self { gamma }
    }

    /// Verify `gamma_k' > 0` and finiteness of `exp(gamma_k)` on the grid
    /// `-4, -4 + 1e-3, ..., 4`.
    pub fn check(&self) -> Result<(), TransformError> {
        for k in 0..4 {
            check_component(k, &self.gamma[k])?;
        }
        Ok(())
    }

    #[inline]
    pub fn gamma(&self, k: usize, z: f64) -> f64 {
        poly::horner(&self.gamma[k], z)
    }

    /// `exp(gamma_k(z_k))` with `z` clamped to `[-4, 4]`.
    #[inline]
    pub fn inverse_array(&self, z: &[f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for k in 0..4 {
            out[k] = self.gamma(k, z[k].clamp(-Z_LIMIT, Z_LIMIT)).exp();
        }
        out
    }

    pub fn inverse(&self, z: &[f64; 4]) -> FeatureVector {
        FeatureVector::from_array(self.inverse_array(z))
    }

    /// Feature vector at `z = 0`.
    pub fn median(&self) -> [f64; 4] {
        self.inverse_array(&[0.0; 4])
    }

    /// Solve `gamma_k(z) = y` on `[-4, 4]`; returns `(z, clamped)`.
    pub fn solve_component(&self, k: usize, y: f64) -> (f64, bool) {
        let c = &self.gamma[k];
        let (mut lo, mut hi) = (-Z_LIMIT, Z_LIMIT);
        let g_lo = poly::horner(c, lo);
        let g_hi = poly::horner(c, hi);
        if !(y >= g_lo) {
            return (lo, true);
        }
        if y > g_hi {
            return (hi, true);
        }
        // Bisection down to a narrow bracket, then Newton kept inside it.
        while hi - lo > 1e-6 {
            let mid = 0.5 * (lo + hi);
            if poly::horner(c, mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut z = 0.5 * (lo + hi);
        for _ in 0..50 {
            let (g, d) = poly::horner_with_derivative(c, z);
            let r = g - y;
            if r.abs() < FORWARD_TOL {
                return (z, false);
            }
            if r < 0.0 {
                lo = z;
            } else {
                hi = z;
            }
            let next = z - r / d;
            z = if next > lo && next < hi {
                next
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
                break;
            }
        }
        (z, false)
    }

    pub fn forward_array(&self, x: &[f64; 4]) -> Forward {
        let mut z = [0.0; 4];
        let mut clamped = [false; 4];
        for k in 0..4 {
            let (v, c) = self.solve_component(k, x[k].ln());
            z[k] = v;
            clamped[k] = c;
        }
        Forward { z, clamped }
    }

    pub fn forward(&self, x: &FeatureVector) -> Forward {
        self.forward_array(&x.to_array())
    }
}
