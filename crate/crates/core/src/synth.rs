//! Synthetic ground truth: a known parameter bundle, features sampled from
//! it, and a raw cycling waveform built from those features.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::conduction::{ConductionModel, DEFAULT_U_MAX};
use crate::linalg::{self, M4};
use crate::paramfile::{Defaults, ParameterBundle};
use crate::rng::{Domain, StreamRng};
use crate::svar::SvarModel;
use crate::transform::NormalizingMap;
use crate::waveform::{FeatureVector, RawTrace, DEFAULT_SAMPLES_PER_CYCLE};

/// Orders stored in the ground-truth bundle; all but the first are the
/// order-2 process padded with zero lag matrices.
pub const BUNDLE_ORDERS: [usize; 4] = [2, 10, 30, 100];

/// Default additive current noise of the synthetic waveform (A).
pub const DEFAULT_CURRENT_NOISE: f64 = 0.2e-6;

/// Medians of R_H (ohm), U_S (V), R_L (ohm), U_R (V).
pub const MEDIANS: [f64; 4] = [150e3, 0.85, 8.2e3, 0.72];
// gamma_k(z) = ln(median_k) + s_k z + c_k z^2
const GAMMA_S: [f64; 4] = [0.30, 0.06, 0.08, 0.05];
const GAMMA_C2: [f64; 4] = [0.005, 0.001, 0.001, 0.0];

const PHI1: M4 = [
    [0.45, 0.05, 0.03, 0.00],
    [0.04, 0.35, 0.02, 0.02],
    [0.02, 0.05, 0.50, 0.03],
    [0.00, 0.03, 0.06, 0.40],
];
const PHI2: M4 = [
    [0.15, 0.00, 0.00, 0.02],
    [0.00, 0.12, 0.03, 0.00],
    [0.01, 0.00, 0.10, 0.00],
    [0.00, 0.02, 0.00, 0.15],
];

pub fn ground_truth_map() -> NormalizingMap {
    let mut gamma = [[0.0; 6]; 4];
    for k in 0..4 {
        gamma[k][0] = MEDIANS[k].ln();
        gamma[k][1] = GAMMA_S[k];
        gamma[k][2] = GAMMA_C2[k];
    }
    NormalizingMap { gamma }
}

/// Stable SVAR(2) whose components have unit stationary variance.
pub fn ground_truth_model() -> SvarModel {
    let fixture = SvarModel::reference_fixture();
    let raw = SvarModel::from_reduced(vec![PHI1, PHI2], [0.0; 4], fixture.sigma_u)
        .expect("ground-truth model is well formed");
    let g = raw.stationary_covariance().expect("ground-truth model is stable");
    let d: [f64; 4] = std::array::from_fn(|k| 1.0 / g[(k, k)].sqrt());
    let scale = |m: &M4, right_inverse: bool| -> M4 {
        std::array::from_fn(|r| {
            std::array::from_fn(|c| {
                let right = if right_inverse { 1.0 / d[c] } else { d[c] };
                d[r] * m[r][c] * right
            })
        })
    };
    let phi = raw.phi.iter().map(|m| scale(m, true)).collect();
    SvarModel::from_reduced(phi, [0.0; 4], scale(&raw.sigma_u, false))
        .expect("rescaled model is well formed")
}

/// Stationary covariance of one feature vector (the DtD `Sigma`).
pub fn stationary_block(model: &SvarModel) -> M4 {
    let g = model.stationary_covariance().expect("model is stable");
    std::array::from_fn(|r| std::array::from_fn(|c| g[(r, c)]))
}

pub fn ground_truth_bundle() -> ParameterBundle {
    let base = ground_truth_model();
    let sigma = stationary_block(&base);
    let models = BUNDLE_ORDERS
        .iter()
        .map(|&p| base.padded(p).expect("order in range"))
        .collect();
    ParameterBundle::new(
        ConductionModel::default(),
        ground_truth_map(),
        models,
        sigma,
        Defaults::default(),
    )
    .expect("ground-truth bundle is valid")
}

/// `n` feature vectors from `model` mapped through `map`.
pub fn sample_features(model: &SvarModel, map: &NormalizingMap, n: usize, seed: u64) -> Vec<FeatureVector> {
    model
        .generate(n, seed)
        .iter()
        .map(|z| map.inverse(z))
        .collect()
}

/// Options of [`synth_waveform`].
#[derive(Debug, Clone)]
pub struct WaveformConfig {
    pub samples_per_cycle: usize,
    pub u_max: f64,
    /// Standard deviation of additive current noise (A).
    pub noise: f64,
    pub seed: u64,
}

impl WaveformConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            samples_per_cycle: DEFAULT_SAMPLES_PER_CYCLE,
            u_max: DEFAULT_U_MAX,
            noise: DEFAULT_CURRENT_NOISE,
            seed,
        }
    }
}

/// Voltage of the triangular sweep at sample `k`, starting at `+u_max`.
pub fn triangle(k: usize, period: usize, u_max: f64) -> f64 {
    let half = period as f64 / 2.0;
    let s = (k % period) as f64;
    if s < half {
        u_max - 2.0 * u_max * s / half
    } else {
        -u_max + 2.0 * u_max * (s - half) / half
    }
}

/// Reconstruct a cycling trace from per-cycle features.
///
/// Cycle `n` starts at the positive apex in HRS_n, switches abruptly to LRS_n
/// at the first sample with `U <= -U_S`, stays there on the rising sweep up to
/// `U_R`, then follows the RESET parabola to HRS_{n+1} at `U_max`. The last
/// vector only supplies `R_H` of the final RESET, so `features.len() - 1`
/// cycles are produced, followed by one closing apex sample.
pub fn synth_waveform(features: &[FeatureVector], cond: &ConductionModel, cfg: &WaveformConfig) -> RawTrace {
    let period = cfg.samples_per_cycle;
    let cycles = features.len().saturating_sub(1);
    let n = cycles * period + usize::from(cycles > 0);
    let mut u = Vec::with_capacity(n);
    let mut i = Vec::with_capacity(n);
    let mut rng = StreamRng::new(cfg.seed, Domain::Trace, 0);
    let r_of = |res: f64| cond.state_from_resistance(res).unwrap_or(1.0);
    for c in 0..cycles {
        let f = &features[c];
        let r_h = r_of(f.r_h);
        let r_l = r_of(f.r_l);
        let r_h_next = r_of(features[c + 1].r_h);
        let curve = cond.build_reset_curve(f.u_r, r_l, r_h_next, cfg.u_max).ok();
        let mut set = false;
        for k in 0..period {
            let v = triangle(k, period, cfg.u_max);
            let rising = k >= period / 2;
            if !rising && v <= -f.u_s {
                set = true;
            }
            let current = if !set {
                cond.current(r_h, v)
            } else if rising && v > f.u_r {
                match &curve {
                    Some(q) => q.eval(v),
                    None => cond.current(r_h_next, v),
                }
            } else {
                cond.current(r_l, v)
            };
            u.push(v);
            i.push(current);
        }
    }
    if cycles > 0 {
        let r = r_of(features[cycles].r_h);
        u.push(cfg.u_max);
        i.push(cond.current(r, cfg.u_max));
    }
    if cfg.noise > 0.0 {
        for x in i.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x += cfg.noise * z;
        }
    }
    RawTrace::new(u, i, period).expect("synthetic trace is well formed")
}

/// A complete ground-truth corpus.
pub struct Corpus {
    pub bundle: ParameterBundle,
    /// Features of the cycles present in `trace`.
    pub features: Vec<FeatureVector>,
    pub trace: RawTrace,
}

/// Sample `n` cycles from the ground-truth bundle and build their waveform.
pub fn corpus(n: usize, seed: u64) -> Corpus {
    let bundle = ground_truth_bundle();
    let model = &bundle.models[0];
    let mut features = sample_features(model, &bundle.map, n + 1, seed);
    let trace = synth_waveform(&features, &bundle.conduction, &WaveformConfig::new(seed));
    features.truncate(n);
    Corpus {
        bundle,
        features,
        trace,
    }
}

/// Analytic mean of `exp(mu + s z + c z^2)` for standard-normal `z`
/// (requires `c < 1/2`).
pub fn lognormal_quadratic_mean(mu: f64, s: f64, c: f64) -> f64 {
    let k = 1.0 - 2.0 * c;
    (mu + s * s / (2.0 * k)).exp() / k.sqrt()
}

/// Analytic feature means of a map with at most quadratic coefficients.
pub fn analytic_means(map: &NormalizingMap) -> [f64; 4] {
    std::array::from_fn(|k| {
        let g = &map.gamma[k];
        lognormal_quadratic_mean(g[0], g[1], g[2])
    })
}

/// Maximum absolute difference between two covariance blocks.
pub fn covariance_error(a: &M4, b: &M4) -> f64 {
    linalg::max_abs_diff(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sample_covariance;

    #[test]
    fn medians_match_the_plan() {
        let m = ground_truth_map().median();
        for k in 0..4 {
            assert!((m[k] / MEDIANS[k] - 1.0).abs() < 1e-12, "{k}: {}", m[k]);
        }
        ground_truth_map().check().unwrap();
    }

    #[test]
    fn unit_stationary_variance() {
        let model = ground_truth_model();
        let s = stationary_block(&model);
        for k in 0..4 {
            assert!((s[k][k] - 1.0).abs() < 1e-9);
        }
        assert!(model.spectral_radius().unwrap() < 0.9);
        let x = model.generate(100_000, 3);
        let (_, cov) = sample_covariance(&x);
        assert!(covariance_error(&cov, &s) < 0.03);
    }

    #[test]
    fn analytic_mean_by_quadrature() {
        // Trapezoid over the normal density.
        let (mu, s, c) = (0.1, 0.3, 0.02);
        let h = 1e-3;
        let mut acc = 0.0;
        for j in -10_000..=10_000 {
            let z = j as f64 * h;
            let w = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            acc += w * (mu + s * z + c * z * z).exp() * h;
        }
        assert!((acc - lognormal_quadratic_mean(mu, s, c)).abs() < 1e-9);
    }

    #[test]
    fn triangle_shape() {
        assert_eq!(triangle(0, 1042, 1.5), 1.5);
        assert_eq!(triangle(521, 1042, 1.5), -1.5);
        assert_eq!(triangle(1042, 1042, 1.5), 1.5);
        assert!((triangle(260, 1042, 1.5) - (1.5 - 3.0 * 260.0 / 521.0)).abs() < 1e-15);
    }

    #[test]
    fn waveform_follows_the_cycle_plan() {
        let bundle = ground_truth_bundle();
        let feats = sample_features(&bundle.models[0], &bundle.map, 4, 9);
        let mut cfg = WaveformConfig::new(1);
        cfg.noise = 0.0;
        let cond = &bundle.conduction;
        let t = synth_waveform(&feats, cond, &cfg);
        assert_eq!(t.len(), 3 * 1042 + 1);
        let f = &feats[1];
        let base = 1042;
        // Static resistance of the HRS branch at u0 on the falling sweep.
        let k0 = (0..521).find(|&k| triangle(k, 1042, 1.5) <= 0.2).unwrap();
        let u = t.u[base + k0];
        let r = cond.state_from_point(t.i[base + k0], u).unwrap();
        assert!((cond.static_resistance(r) / f.r_h - 1.0).abs() < 1e-9);
        // SET happens at the first sample at or below -U_S.
        let ks = (0..521).find(|&k| triangle(k, 1042, 1.5) <= -f.u_s).unwrap();
        let r_before = cond.state_from_point(t.i[base + ks - 1], t.u[base + ks - 1]).unwrap();
        let r_after = cond.state_from_point(t.i[base + ks], t.u[base + ks]).unwrap();
        assert!(r_before > r_after);
        // The closing apex of each cycle is HRS of the next one.
        let apex = t.i[2 * 1042];
        let r_next = cond.state_from_resistance(feats[2].r_h).unwrap();
        assert!((apex - cond.current(r_next, 1.5)).abs() < 1e-15);
    }

    #[test]
    fn corpus_is_reproducible() {
        let a = corpus(20, 5);
        let b = corpus(20, 5);
        assert_eq!(a.features, b.features);
        assert_eq!(a.trace.i, b.trace.i);
        assert_eq!(a.features.len(), 20);
        assert_ne!(corpus(20, 6).trace.i, a.trace.i);
    }
}
