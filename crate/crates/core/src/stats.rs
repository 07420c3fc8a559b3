//! Validation statistics: 1-D Wasserstein distance and lagged Pearson
//! correlation matrices.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transform::quantile_sorted;
use crate::FEATURE_NAMES;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample is empty")]
    Empty,
    #[error("series of length {len} is too short for max lag {max_lag}")]
    TooShort { len: usize, max_lag: usize },
}

/// W1 result with a note on whether the larger sample was resampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wasserstein {
    pub distance: f64,
    pub resampled: bool,
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// First Wasserstein distance between two empirical distributions.
///
/// Equal sizes: mean absolute difference of the sorted samples. Otherwise the
/// larger sample is replaced by its type-7 quantiles at `(k + 0.5) / m`,
/// `m` being the smaller size.
pub fn wasserstein1_report(a: &[f64], b: &[f64]) -> Result<Wasserstein, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::Empty);
    }
    let (mut sa, mut sb) = (sorted(a), sorted(b));
    let resampled = sa.len() != sb.len();
    if resampled {
        let (small, large) = if sa.len() < sb.len() {
            (&mut sa, &mut sb)
        } else {
            (&mut sb, &mut sa)
        };
        let m = small.len();
        *large = (0..m)
            .map(|k| quantile_sorted(large, (k as f64 + 0.5) / m as f64))
            .collect();
    }
    let n = sa.len() as f64;
    let distance = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / n;
    Ok(Wasserstein {
        distance,
        resampled,
    })
}

pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    wasserstein1_report(a, b).map(|w| w.distance)
}

/// Per-feature W1 distance between two feature series.
pub fn feature_wasserstein(a: &[[f64; 4]], b: &[[f64; 4]]) -> Result<[f64; 4], StatsError> {
    let mut out = [0.0; 4];
    for (k, o) in out.iter_mut().enumerate() {
        let xa: Vec<f64> = a.iter().map(|v| v[k]).collect();
        let xb: Vec<f64> = b.iter().map(|v| v[k]).collect();
        *o = wasserstein1(&xa, &xb)?;
    }
    Ok(out)
}

pub fn feature_means(series: &[[f64; 4]]) -> [f64; 4] {
    let mut m = [0.0; 4];
    for v in series {
        for k in 0..4 {
            m[k] += v[k];
        }
    }
    m.map(|s| s / series.len() as f64)
}

/// Lagged correlation matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub lags: Vec<usize>,
    /// `rho[l][row][col]`: correlation of the column variable at `n` with the
    /// row variable at `n - l`.
    pub rho: Vec<[[f64; 4]; 4]>,
    /// Set when a component had zero variance; its correlations are 0.
    pub zero_variance: bool,
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlations of `(Y_{n-l}, X_n)` for `l = 0 ..= max_lag`.
pub fn lagged_pearson(series: &[[f64; 4]], max_lag: usize) -> Result<CorrelationReport, StatsError> {
    if series.len() <= 10 * max_lag || series.len() < 2 {
        return Err(StatsError::TooShort {
            len: series.len(),
            max_lag,
        });
    }
    let cols: Vec<Vec<f64>> = (0..4).map(|k| series.iter().map(|v| v[k]).collect()).collect();
    let n = series.len();
    let mut zero_variance = false;
    let mut rho = Vec::with_capacity(max_lag + 1);
    for l in 0..=max_lag {
        let mut m = [[0.0; 4]; 4];
        for row in 0..4 {
            for col in 0..4 {
                let lagged = &cols[row][..n - l];
                let current = &cols[col][l..];
                m[row][col] = match pearson(lagged, current) {
                    Some(r) => r,
                    None => {
                        zero_variance = true;
                        0.0
                    }
                };
            }
        }
        rho.push(m);
    }
    Ok(CorrelationReport {
        lags: (0..=max_lag).collect(),
        rho,
        zero_variance,
    })
}

impl CorrelationReport {
    /// One row per lag, columns `lag` followed by `row/col` pairs.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "lag")?;
        for row in FEATURE_NAMES {
            for col in FEATURE_NAMES {
                write!(w, ",{row}/{col}")?;
            }
        }
        writeln!(w)?;
        for (l, m) in self.lags.iter().zip(&self.rho) {
            write!(w, "{l}")?;
            for row in m {
                for v in row {
                    write!(w, ",{v}")?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Largest absolute entry-wise difference to another report over common lags.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut d = 0.0f64;
        for (a, b) in self.rho.iter().zip(&other.rho) {
            for r in 0..4 {
                for c in 0..4 {
                    d = d.max((a[r][c] - b[r][c]).abs());
                }
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    use crate::rng::{Domain, StreamRng};

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn identical_is_zero() {
        let a = [3.0, 1.0, 2.0];
        assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
        assert_eq!(wasserstein1(&[], &a), Err(StatsError::Empty));
    }

    #[test]
    fn shift() {
        let a = [0.3, -1.0, 2.5, 4.0];
        let b: Vec<f64> = a.iter().map(|x| x + 1.25).collect();
        assert!((wasserstein1(&a, &b).unwrap() - 1.25).abs() < 1e-15);
    }

    #[test]
    fn four_point_assignment() {
        let a: [f64; 4] = [0.2, 3.1, -1.0, 0.9];
        let b = [1.5, -0.4, 2.2, 0.0];
        let best = permutations(4)
            .iter()
            .map(|p| (0..4).map(|k| (a[k] - b[p[k]]).abs()).sum::<f64>() / 4.0)
            .fold(f64::INFINITY, f64::min);
        assert!((wasserstein1(&a, &b).unwrap() - best).abs() < 1e-15);
    }

    #[test]
    fn unequal_sizes_are_resampled() {
        let a: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let b: Vec<f64> = (0..1000).map(|k| k as f64 / 10.0).collect();
        let w = wasserstein1_report(&a, &b).unwrap();
        assert!(w.resampled);
        assert!(w.distance < 0.6);
    }

    proptest! {
        #[test]
        fn metric_properties(
            a in prop::collection::vec(-10.0f64..10.0, 8),
            b in prop::collection::vec(-10.0f64..10.0, 8),
            c in prop::collection::vec(-10.0f64..10.0, 8),
            s in -5.0f64..5.0,
        ) {
            let ab = wasserstein1(&a, &b).unwrap();
            prop_assert!((ab - wasserstein1(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!(ab <= wasserstein1(&a, &c).unwrap() + wasserstein1(&c, &b).unwrap() + 1e-12);
            let sa: Vec<f64> = a.iter().map(|x| s * x).collect();
            let sb: Vec<f64> = b.iter().map(|x| s * x).collect();
            prop_assert!((wasserstein1(&sa, &sb).unwrap() - s.abs() * ab).abs() < 1e-10);
        }

        #[test]
        fn pearson_affine_invariance(scale in 0.1f64..10.0, offset in -5.0f64..5.0, seed in 0u64..1000) {
            let mut rng = StreamRng::new(seed, Domain::Synth, 0);
            let s: Vec<[f64; 4]> = (0..200).map(|_| {
                let e: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
                [e[0], e[0] + e[1], e[2], e[3] - e[2]]
            }).collect();
            let t: Vec<[f64; 4]> = s.iter().map(|v| [v[0] * scale + offset, v[1], v[2], v[3]]).collect();
            let a = lagged_pearson(&s, 3).unwrap();
            let b = lagged_pearson(&t, 3).unwrap();
            prop_assert!(a.max_abs_diff(&b) < 1e-10);
        }
    }

    fn ar1_series(n: usize, phi: f64, seed: u64) -> Vec<[f64; 4]> {
        let mut rng = StreamRng::new(seed, Domain::Synth, 1);
        let mut x = 0.0;
        (0..n)
            .map(|_| {
                let e: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
                x = phi * x + e[0];
                [x, e[1], e[2], e[3]]
            })
            .collect()
    }

    #[test]
    fn lag_zero_diagonal() {
        let r = lagged_pearson(&ar1_series(1000, 0.3, 2), 5).unwrap();
        for k in 0..4 {
            assert!((r.rho[0][k][k] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ar1_autocorrelation() {
        let r = lagged_pearson(&ar1_series(100_000, 0.5, 5), 5).unwrap();
        for l in 0..=5 {
            assert!((r.rho[l][0][0] - 0.5f64.powi(l as i32)).abs() < 0.02, "lag {l}");
        }
        // Independent white components.
        for l in 0..=5 {
            for row in 0..4 {
                for col in 0..4 {
                    if (row, col) != (0, 0) && !(l == 0 && row == col) {
                        assert!(r.rho[l][row][col].abs() < 0.02);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_variance_is_flagged() {
        let s: Vec<[f64; 4]> = (0..100).map(|k| [k as f64, 1.0, (k % 7) as f64, 0.5]).collect();
        let r = lagged_pearson(&s, 2).unwrap();
        assert!(r.zero_variance);
        assert_eq!(r.rho[1][1][0], 0.0);
    }

    #[test]
    fn lag_direction() {
        // Component 1 copies component 0 with one cycle of delay, so the row
        // variable 0 lagged by one matches column variable 1.
        let mut rng = StreamRng::new(1, Domain::Synth, 2);
        let e: Vec<f64> = (0..2000).map(|_| rng.sample(StandardNormal)).collect();
        let s: Vec<[f64; 4]> = (0..2000)
            .map(|n| [e[n], if n > 0 { e[n - 1] } else { 0.0 }, e[(n * 7) % 2000], e[(n * 13) % 2000]])
            .collect();
        let r = lagged_pearson(&s, 2).unwrap();
        assert!(r.rho[1][0][1] > 0.99);
        assert!(r.rho[1][1][0].abs() < 0.1);
    }

    #[test]
    fn csv_layout() {
        let r = lagged_pearson(&ar1_series(200, 0.5, 1), 3).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0].split(',').count(), 17);
        assert!(lines[0].starts_with("lag,r_h/r_h,r_h/u_s"));
    }
}
