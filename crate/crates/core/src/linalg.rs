//! Small dense helpers shared by the fitting code.

use nalgebra::{DMatrix, Matrix4};

/// Row-major 4x4 matrix as stored in parameter files and reports.
pub type M4 = [[f64; 4]; 4];

pub const IDENTITY4: M4 = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

pub fn to_na(m: &M4) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| m[i][j])
}

pub fn from_na(m: &Matrix4<f64>) -> M4 {
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    out
}

pub fn mat_vec(m: &M4, v: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2] + m[i][3] * v[3];
    }
    out
}

pub fn max_abs_diff(a: &M4, b: &M4) -> f64 {
    let mut d = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            d = d.max((a[i][j] - b[i][j]).abs());
        }
    }
    d
}

/// Sample mean and covariance (denominator `n - 1`) of a 4-vector series.
pub fn sample_covariance(series: &[[f64; 4]]) -> ([f64; 4], M4) {
    let n = series.len() as f64;
    let mut mean = [0.0; 4];
    for x in series {
        for k in 0..4 {
            mean[k] += x[k];
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut cov = [[0.0; 4]; 4];
    for x in series {
        for i in 0..4 {
            let di = x[i] - mean[i];
            for j in 0..=i {
                cov[i][j] += di * (x[j] - mean[j]);
            }
        }
    }
    let denom = (n - 1.0).max(1.0);
    for i in 0..4 {
        for j in 0..=i {
            cov[i][j] /= denom;
            cov[j][i] = cov[i][j];
        }
    }
    (mean, cov)
}

/// Lower Cholesky factor of a 4x4 matrix, if positive definite.
pub fn cholesky4(m: &M4) -> Option<M4> {
    to_na(m).cholesky().map(|c| {
        let mut l = from_na(&c.l());
        for (i, row) in l.iter_mut().enumerate() {
            for v in row.iter_mut().skip(i + 1) {
                *v = 0.0;
            }
        }
        l
    })
}

/// Lower Cholesky factor of a dense symmetric matrix, if positive definite.
pub fn cholesky_lower(m: DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.cholesky().map(|c| c.l())
}
