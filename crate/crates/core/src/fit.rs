//! Fitting pipeline: features -> normalizing map -> SVAR(p) models -> bundle.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conduction::{ConductionError, ConductionModel};
use crate::linalg::{self, M4};
use crate::paramfile::{Defaults, ParamError, ParameterBundle};
use crate::svar::{SvarError, SvarModel, INTERCEPT_WARN};
use crate::transform::{self, NormalizingMap, TransformError};
use crate::waveform::{CycleFit, ExtractConfig, FeatureVector};
use crate::FEATURE_NAMES;

/// Share of the most extreme per-cycle fits pooled into HHRS / LLRS.
pub const LIMIT_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum FitError {
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("order {p}: {source}")]
    Svar { p: usize, source: SvarError },
    #[error("order {p}: fitted process is not stationary (spectral radius {rho:.6})")]
    NotStationary { p: usize, rho: f64 },
    #[error("no model orders requested")]
    NoOrders,
    #[error("normalized data covariance is not positive definite")]
    CovarianceNotPd,
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Conduction(#[from] ConductionError),
    #[error("sidecar: {0}")]
    Sidecar(String),
}

/// Degree policy for the normalizing-map polynomials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapDegree {
    /// Every feature at this degree; a non-monotone fit is an error.
    Fixed(usize),
    /// Per feature, the highest degree up to this one that is monotone.
    Auto(usize),
}

impl Default for MapDegree {
    fn default() -> Self {
        MapDegree::Fixed(transform::DEFAULT_DEGREE)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderDiagnostics {
    pub p: usize,
    pub spectral_radius: f64,
    pub sigma_u: M4,
    pub intercept: [f64; 4],
    /// Components whose intercept magnitude exceeds the warning level.
    pub intercept_warnings: Vec<String>,
    pub n_obs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n_samples: usize,
    /// Feature values outside the image of the map, per feature.
    pub clamped: [usize; 4],
    /// Polynomial degree used for each feature.
    pub map_degrees: [usize; 4],
    /// Covariance of the normalized data.
    pub sigma: M4,
    pub orders: Vec<OrderDiagnostics>,
}

/// Fit the normalizing map and one SVAR model per order.
pub fn fit_bundle(
    features: &[FeatureVector],
    conduction: ConductionModel,
    orders: &[usize],
    degree: MapDegree,
    defaults: Defaults,
) -> Result<(ParameterBundle, FitDiagnostics), FitError> {
    if orders.is_empty() {
        return Err(FitError::NoOrders);
    }
    let (map, map_degrees) = match degree {
        MapDegree::Fixed(d) => (transform::fit_map_with_degree(features, d)?, [d; 4]),
        MapDegree::Auto(d) => transform::fit_map_descending(features, d)?,
    };
    let (z, clamped) = normalize(&map, features);
    let (_, sigma) = linalg::sample_covariance(&z);
    if linalg::cholesky4(&sigma).is_none() {
        return Err(FitError::CovarianceNotPd);
    }
    let mut models = Vec::with_capacity(orders.len());
    let mut diags = Vec::with_capacity(orders.len());
    for &p in orders {
        let (model, d) = fit_order(&z, p)?;
        models.push(model);
        diags.push(d);
    }
    let bundle = ParameterBundle::new(conduction, map, models, sigma, defaults)?;
    diags.sort_by_key(|d| d.p);
    Ok((
        bundle,
        FitDiagnostics {
            n_samples: features.len(),
            clamped,
            map_degrees,
            sigma,
            orders: diags,
        },
    ))
}

/// Map features to normalized space, counting clamped components.
pub fn normalize(map: &NormalizingMap, features: &[FeatureVector]) -> (Vec<[f64; 4]>, [usize; 4]) {
    let mut clamped = [0usize; 4];
    let z = features
        .iter()
        .map(|f| {
            let fw = map.forward(f);
            for k in 0..4 {
                clamped[k] += usize::from(fw.clamped[k]);
            }
            fw.z
        })
        .collect();
    (z, clamped)
}

/// Fit one SVAR order to a normalized series.
pub fn fit_order(z: &[[f64; 4]], p: usize) -> Result<(SvarModel, OrderDiagnostics), FitError> {
    let wrap = |source| FitError::Svar { p, source };
    let fit = crate::svar::fit_var_ols(z, p).map_err(wrap)?;
    let n_obs = fit.n_obs;
    let model = SvarModel::from_fit(fit).map_err(wrap)?;
    let rho = model.spectral_radius().map_err(wrap)?;
    if rho >= 1.0 {
        return Err(FitError::NotStationary { p, rho });
    }
    let intercept_warnings: Vec<String> = (0..4)
        .filter(|&k| model.intercept[k].abs() > INTERCEPT_WARN)
        .map(|k| FEATURE_NAMES[k].to_string())
        .collect();
    if !intercept_warnings.is_empty() {
        log::warn!("order {p}: large intercepts in {}", intercept_warnings.join(", "));
    }
    let d = OrderDiagnostics {
        p,
        spectral_radius: rho,
        sigma_u: model.sigma_u,
        intercept: model.intercept,
        intercept_warnings,
        n_obs,
    };
    Ok((model, d))
}

/// Path of the conduction sidecar written next to a features file.
pub fn sidecar_path(features: &Path) -> PathBuf {
    let mut name = features
        .file_stem()
        .map(|s| s.to_os_string())
        .unwrap_or_default();
    name.push(".conduction.json");
    features.with_file_name(name)
}

/// HHRS / LLRS estimated from per-cycle fits.
pub fn conduction_from_fits(fits: &[CycleFit], cfg: &ExtractConfig) -> Result<ConductionModel, FitError> {
    let hrs: Vec<(f64, Vec<f64>)> = fits.iter().map(|f| (f.r_h, f.hrs.clone())).collect();
    let lrs: Vec<(f64, Vec<f64>)> = fits.iter().map(|f| (f.r_l, f.lrs.clone())).collect();
    Ok(ConductionModel::estimate_limits(
        &hrs,
        &lrs,
        LIMIT_FRACTION,
        (0.0, cfg.hrs_u_max),
        (cfg.lrs_u_min, 0.6),
        cfg.u0,
    )?)
}

pub fn save_conduction(path: &Path, model: &ConductionModel) -> Result<(), FitError> {
    let json = serde_json::to_string_pretty(model).map_err(|e| FitError::Sidecar(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| FitError::Sidecar(format!("{}: {e}", path.display())))
}

/// Conduction model from the sidecar, if present.
pub fn load_conduction(path: &Path) -> Result<Option<ConductionModel>, FitError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(FitError::Sidecar(format!("{}: {e}", path.display()))),
    };
    let model: ConductionModel =
        serde_json::from_str(&text).map_err(|e| FitError::Sidecar(format!("{}: {e}", path.display())))?;
    model.validate()?;
    Ok(Some(model))
}
