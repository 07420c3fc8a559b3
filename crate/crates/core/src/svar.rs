//! Structural vector autoregression of order p on normalized features.
//!
//! The structural form is
//!
//! ```text
//! A x_n = sum_{i=1..p} C_i x_{n-i} + B eps_n,   eps_n ~ N(0, I_4)
//! ```
//!
//! with `A` lower-unitriangular and `B` positive diagonal, which fixes the
//! causal ordering R_H -> U_S -> R_L -> U_R inside one cycle. Fitting goes
//! through the reduced form `x_n = sum Phi_i x_{n-i} + u_n`,
//! `Cov(u_n) = Sigma_u`: OLS for `Phi_i`, then the recursive identification
//! `A^-1 B = chol(Sigma_u)`. Generation also uses the reduced form.

use nalgebra::{DMatrix, Matrix4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, M4};
use crate::rng::{Domain, StreamRng};

pub const MIN_ORDER: usize = 1;
pub const MAX_ORDER: usize = 200;
/// Default model order.
pub const DEFAULT_ORDER: usize = 10;
/// Intercept components above this magnitude trigger a warning after fitting.
pub const INTERCEPT_WARN: f64 = 0.05;

const POWER_MAX_ITER: usize = 100_000;
const POWER_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum SvarError {
    #[error("model order must be in {MIN_ORDER}..={MAX_ORDER}, got {0}")]
    BadOrder(usize),
    #[error("series of length {len} is too short for order {p} (need more than {need})")]
    SeriesTooShort { len: usize, p: usize, need: usize },
    #[error("regressor matrix is rank deficient")]
    RankDeficient,
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("model is not stationary (spectral radius {0})")]
    NotStationary(f64),
    #[error("invalid structural matrices: {0}")]
    Structure(String),
}

/// Reduced-form OLS estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarFit {
    pub phi: Vec<M4>,
    pub intercept: [f64; 4],
    pub sigma_u: M4,
    pub n_obs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvarModel {
    pub p: usize,
    /// Lower-unitriangular contemporaneous matrix.
    pub a: M4,
    /// Diagonal of the noise-amplitude matrix.
    pub b: [f64; 4],
    /// Structural lag matrices `C_1 .. C_p`.
    pub c: Vec<M4>,
    /// Reduced-form lag matrices `Phi_i = A^-1 C_i`.
    pub phi: Vec<M4>,
    pub intercept: [f64; 4],
    pub sigma_u: M4,
    /// Lower Cholesky factor of `sigma_u`, equal to `A^-1 B`.
    pub chol_u: M4,
}

/// Multivariate OLS of `x_n` on `[x_{n-1}, ..., x_{n-p}, 1]`.
pub fn fit_var_ols(series: &[[f64; 4]], p: usize) -> Result<VarFit, SvarError> {
    if !(MIN_ORDER..=MAX_ORDER).contains(&p) {
        return Err(SvarError::BadOrder(p));
    }
    let k = 4 * p + 1;
    let need = 10 * k;
    if series.len() <= need {
        return Err(SvarError::SeriesTooShort {
            len: series.len(),
            p,
            need,
        });
    }
    let t = series.len() - p;
    let regressor = |n: usize, row: &mut [f64]| {
        for i in 1..=p {
            row[4 * (i - 1)..4 * i].copy_from_slice(&series[n - i]);
        }
        row[k - 1] = 1.0;
    };

    const BLOCK: usize = 2048;
    let mut xtx = DMatrix::<f64>::zeros(k, k);
    let mut xty = DMatrix::<f64>::zeros(k, 4);
    let mut start = p;
    while start < series.len() {
        let end = (start + BLOCK).min(series.len());
        let rows = end - start;
        let mut xb = DMatrix::<f64>::zeros(rows, k);
        let mut yb = DMatrix::<f64>::zeros(rows, 4);
        let mut row = vec![0.0; k];
        for (r, n) in (start..end).enumerate() {
            regressor(n, &mut row);
            for (j, v) in row.iter().enumerate() {
                xb[(r, j)] = *v;
            }
            for j in 0..4 {
                yb[(r, j)] = series[n][j];
            }
        }
        xtx.gemm_tr(1.0, &xb, &xb, 1.0);
        xty.gemm_tr(1.0, &xb, &yb, 1.0);
        start = end;
    }
    let chol = xtx.cholesky().ok_or(SvarError::RankDeficient)?;
    let coef = chol.solve(&xty);
    if coef.iter().any(|v| !v.is_finite()) {
        return Err(SvarError::RankDeficient);
    }

    let mut phi = vec![[[0.0; 4]; 4]; p];
    for (i, m) in phi.iter_mut().enumerate() {
        for row in 0..4 {
            for col in 0..4 {
                m[row][col] = coef[(4 * i + col, row)];
            }
        }
    }
    let intercept = [
        coef[(k - 1, 0)],
        coef[(k - 1, 1)],
        coef[(k - 1, 2)],
        coef[(k - 1, 3)],
    ];

    let mut sigma = [[0.0; 4]; 4];
    let mut row = vec![0.0; k];
    for n in p..series.len() {
        regressor(n, &mut row);
        let mut u = [0.0; 4];
        for j in 0..4 {
            let mut pred = 0.0;
            for (r, v) in row.iter().enumerate() {
                pred += v * coef[(r, j)];
            }
            u[j] = series[n][j] - pred;
        }
        for i in 0..4 {
            for j in 0..=i {
                sigma[i][j] += u[i] * u[j];
            }
        }
    }
    for i in 0..4 {
        for j in 0..=i {
            sigma[i][j] /= t as f64;
            sigma[j][i] = sigma[i][j];
        }
    }
    if intercept.iter().any(|c| c.abs() > INTERCEPT_WARN) {
        log::warn!("VAR intercept {intercept:?} is not close to zero; input may not be normalized");
    }
    Ok(VarFit {
        phi,
        intercept,
        sigma_u: sigma,
        n_obs: t,
    })
}

/// Recursive identification: `L = chol(sigma_u)`, `B = diag(L)`, `A = B L^-1`.
pub fn structural_decompose(sigma_u: &M4) -> Result<(M4, [f64; 4]), SvarError> {
    let l = linalg::cholesky4(sigma_u).ok_or(SvarError::NotPositiveDefinite)?;
    let b = [l[0][0], l[1][1], l[2][2], l[3][3]];
    let l_inv = linalg::to_na(&l)
        .try_inverse()
        .ok_or(SvarError::NotPositiveDefinite)?;
    let a_na = Matrix4::from_diagonal(&nalgebra::Vector4::from(b)) * l_inv;
    let mut a = linalg::from_na(&a_na);
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
        for v in row.iter_mut().skip(i + 1) {
            *v = 0.0;
        }
    }
    Ok((a, b))
}

impl SvarModel {
    /// Build the structural model from a reduced-form fit.
    pub fn from_reduced(phi: Vec<M4>, intercept: [f64; 4], sigma_u: M4) -> Result<Self, SvarError> {
        let p = phi.len();
        if !(MIN_ORDER..=MAX_ORDER).contains(&p) {
            return Err(SvarError::BadOrder(p));
        }
        let (a, b) = structural_decompose(&sigma_u)?;
        let a_na = linalg::to_na(&a);
        let c = phi
            .iter()
            .map(|f| linalg::from_na(&(a_na * linalg::to_na(f))))
            .collect();
        let chol_u = linalg::cholesky4(&sigma_u).ok_or(SvarError::NotPositiveDefinite)?;
        Ok(Self {
            p,
            a,
            b,
            c,
            phi,
            intercept,
            sigma_u,
            chol_u,
        })
    }

    pub fn from_fit(fit: VarFit) -> Result<Self, SvarError> {
        Self::from_reduced(fit.phi, fit.intercept, fit.sigma_u)
    }

    /// Build from structural matrices: `Phi_i = A^-1 C_i`, `chol_u = A^-1 B`.
    pub fn from_structural(a: M4, b: [f64; 4], c: Vec<M4>) -> Result<Self, SvarError> {
        let p = c.len();
        if !(MIN_ORDER..=MAX_ORDER).contains(&p) {
            return Err(SvarError::BadOrder(p));
        }
        check_structure(&a, &b)?;
        let a_inv = linalg::to_na(&a)
            .try_inverse()
            .ok_or_else(|| SvarError::Structure("A is singular".into()))?;
        let phi = c
            .iter()
            .map(|ci| linalg::from_na(&(a_inv * linalg::to_na(ci))))
            .collect();
        let chol_na = a_inv * Matrix4::from_diagonal(&nalgebra::Vector4::from(b));
        let mut chol_u = linalg::from_na(&chol_na);
        for (i, row) in chol_u.iter_mut().enumerate() {
            for v in row.iter_mut().skip(i + 1) {
                *v = 0.0;
            }
        }
        let sigma_u = linalg::from_na(&(chol_na * chol_na.transpose()));
        Ok(Self {
            p,
            a,
            b,
            c,
            phi,
            intercept: [0.0; 4],
            sigma_u,
            chol_u,
        })
    }

    /// Model with all lag matrices set to zero: white noise with covariance
    /// `chol_u chol_u^T`.
    pub fn white(p: usize, chol_u: M4) -> Result<Self, SvarError> {
        let sigma = linalg::from_na(&(linalg::to_na(&chol_u) * linalg::to_na(&chol_u).transpose()));
        Self::from_reduced(vec![[[0.0; 4]; 4]; p], [0.0; 4], sigma)
    }

    /// Structure checks: `A` unit lower-triangular, `B > 0`, and
    /// `A^-1 B (A^-1 B)^T = sigma_u` within `tol`.
    pub fn validate(&self, tol: f64) -> Result<(), SvarError> {
        check_structure(&self.a, &self.b)?;
        if self.c.len() != self.p || self.phi.len() != self.p {
            return Err(SvarError::Structure("lag matrix count does not match p".into()));
        }
        let err = linalg::max_abs_diff(&self.identified_covariance(), &self.sigma_u);
        if err > tol {
            return Err(SvarError::Structure(format!(
                "identification identity violated by {err:e}"
            )));
        }
        Ok(())
    }

    /// `A^-1 B (A^-1 B)^T` computed from the structural matrices.
    pub fn identified_covariance(&self) -> M4 {
        let a = linalg::to_na(&self.a);
        let b = Matrix4::from_diagonal(&nalgebra::Vector4::from(self.b));
        let ab = a.solve_lower_triangular(&b).unwrap_or_else(Matrix4::zeros);
        linalg::from_na(&(ab * ab.transpose()))
    }

    /// Same process at a higher order, with zero lag matrices appended.
    pub fn padded(&self, p: usize) -> Result<Self, SvarError> {
        if p < self.p || p > MAX_ORDER {
            return Err(SvarError::BadOrder(p));
        }
        let mut out = self.clone();
        out.p = p;
        out.c.resize(p, [[0.0; 4]; 4]);
        out.phi.resize(p, [[0.0; 4]; 4]);
        Ok(out)
    }

    /// Runtime kernel with flattened matrices.
    pub fn kernel(&self) -> StepKernel {
        let mut phi = Vec::with_capacity(16 * self.p);
        for m in &self.phi {
            for row in m {
                phi.extend_from_slice(row);
            }
        }
        let mut chol = [0.0; 16];
        for i in 0..4 {
            chol[4 * i..4 * i + 4].copy_from_slice(&self.chol_u[i]);
        }
        StepKernel {
            p: self.p,
            phi,
            chol,
        }
    }

    /// One step of the reduced form; the result is pushed into `buf`.
    pub fn step(&self, buf: &mut LagBuffer, eps: [f64; 4]) -> [f64; 4] {
        self.kernel().step(buf, eps)
    }

    /// Largest eigenvalue modulus of the companion matrix.
    pub fn spectral_radius(&self) -> Result<f64, SvarError> {
        spectral_radius(&self.phi)
    }

    /// Generate `n` normalized feature vectors.
    ///
    /// The lag buffer is seeded with `p` independent draws of `chol_u eps`,
    /// followed by `max(10p, 500)` discarded burn-in steps.
    pub fn generate(&self, n: usize, seed: u64) -> Vec<[f64; 4]> {
        let kernel = self.kernel();
        let mut rng = StreamRng::new(seed, Domain::Generate, 0);
        let mut buf = LagBuffer::new(self.p);
        for _ in 0..self.p {
            let e = normal4(&mut rng);
            buf.push(kernel.innovation(&e));
        }
        for _ in 0..burn_in(self.p) {
            let e = normal4(&mut rng);
            kernel.step(&mut buf, e);
        }
        (0..n)
            .map(|_| {
                let e = normal4(&mut rng);
                kernel.step(&mut buf, e)
            })
            .collect()
    }

    /// Stationary covariance of the stacked history `[x_{n-1}; ...; x_{n-p}]`
    /// (4p x 4p), by the doubling iteration on the companion form.
    pub fn stationary_covariance(&self) -> Result<DMatrix<f64>, SvarError> {
        let rho = self.spectral_radius()?;
        if rho >= 1.0 {
            return Err(SvarError::NotStationary(rho));
        }
        let d = 4 * self.p;
        let mut f = DMatrix::<f64>::zeros(d, d);
        for (i, m) in self.phi.iter().enumerate() {
            for r in 0..4 {
                for c in 0..4 {
                    f[(r, 4 * i + c)] = m[r][c];
                }
            }
        }
        for r in 4..d {
            f[(r, r - 4)] = 1.0;
        }
        let mut gamma = DMatrix::<f64>::zeros(d, d);
        for r in 0..4 {
            for c in 0..4 {
                gamma[(r, c)] = self.sigma_u[r][c];
            }
        }
        for _ in 0..64 {
            let add = &f * &gamma * f.transpose();
            let delta = add.amax();
            gamma += add;
            if delta <= 1e-16 * gamma.amax() {
                break;
            }
            f = &f * &f;
        }
        let gamma = (&gamma + gamma.transpose()) * 0.5;
        Ok(gamma)
    }

    /// Reference parameters of a device fitted at order 100, truncated to the
    /// first lag: contemporaneous weights, noise amplitudes and `C_1`.
    pub fn reference_fixture() -> Self {
        // Contemporaneous weights W with A = I - W.
        let a = [
            [1.0, 0.0, 0.0, 0.0],
            [-0.111, 1.0, 0.0, 0.0],
            [-0.023, 0.139, 1.0, 0.0],
            [0.008, -0.070, -0.180, 1.0],
        ];
        let b = [0.984, 0.945, 0.908, 0.921];
        let c1 = [
            [0.043, 0.021, 0.037, -0.002],
            [0.015, 0.057, 0.028, -0.011],
            [0.010, -0.000, 0.153, 0.010],
            [0.001, 0.002, 0.023, 0.085],
        ];
        Self::from_structural(a, b, vec![c1]).expect("reference fixture is well formed")
    }
}

fn check_structure(a: &M4, b: &[f64; 4]) -> Result<(), SvarError> {
    for i in 0..4 {
        if a[i][i] != 1.0 {
            return Err(SvarError::Structure("A must have unit diagonal".into()));
        }
        for j in i + 1..4 {
            if a[i][j] != 0.0 {
                return Err(SvarError::Structure("A must be lower triangular".into()));
            }
        }
        if !(b[i] > 0.0) {
            return Err(SvarError::Structure("B must be positive".into()));
        }
    }
    Ok(())
}

pub fn burn_in(p: usize) -> usize {
    (10 * p).max(500)
}

pub fn normal4<R: Rng + ?Sized>(rng: &mut R) -> [f64; 4] {
    [
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    ]
}

/// Ring buffer of the last `p` normalized vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LagBuffer {
    data: Vec<f64>,
    /// Slot that will be overwritten next (the oldest entry).
    cursor: usize,
}

impl LagBuffer {
    pub fn new(p: usize) -> Self {
        Self {
            data: vec![0.0; 4 * p],
            cursor: 0,
        }
    }

    pub fn order(&self) -> usize {
        self.data.len() / 4
    }

    pub fn push(&mut self, x: [f64; 4]) {
        let p = self.order();
        self.data[4 * self.cursor..4 * self.cursor + 4].copy_from_slice(&x);
        self.cursor = (self.cursor + 1) % p;
    }

    /// Lag `i` (1 = most recent).
    pub fn lag(&self, i: usize) -> [f64; 4] {
        let p = self.order();
        let slot = (self.cursor + p - i) % p;
        let mut out = [0.0; 4];
        out.copy_from_slice(&self.data[4 * slot..4 * slot + 4]);
        out
    }

    /// History in chronological order (oldest first).
    pub fn chronological(&self) -> Vec<[f64; 4]> {
        (1..=self.order()).rev().map(|i| self.lag(i)).collect()
    }
}

/// Flattened reduced-form matrices used on the hot path.
#[derive(Debug, Clone, PartialEq)]
pub struct StepKernel {
    pub p: usize,
    /// `p` row-major 4x4 blocks.
    pub phi: Vec<f64>,
    /// Row-major lower Cholesky factor of `sigma_u`.
    pub chol: [f64; 16],
}

/// Element type of a lag ring buffer.
pub trait LagScalar: Copy {
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl LagScalar for f64 {
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }
}

impl LagScalar for f32 {
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl StepKernel {
    /// `chol_u * eps`.
    #[inline]
    pub fn innovation(&self, eps: &[f64; 4]) -> [f64; 4] {
        let l = &self.chol;
        [
            l[0] * eps[0],
            l[4] * eps[0] + l[5] * eps[1],
            l[8] * eps[0] + l[9] * eps[1] + l[10] * eps[2],
            l[12] * eps[0] + l[13] * eps[1] + l[14] * eps[2] + l[15] * eps[3],
        ]
    }

    /// Conditional mean `sum_i Phi_i x_{n-i}` over a ring of `p` slots whose
    /// next write position is `cursor`. Lags are visited from most recent to
    /// oldest; accumulation order is fixed.
    #[inline]
    pub fn predict<T: LagScalar>(&self, ring: &[T], cursor: usize) -> [f64; 4] {
        let mut acc = [0.0f64; 4];
        let mut lag = 0usize;
        let visit = |slot: usize, acc: &mut [f64; 4], lag: usize| {
            let x = &ring[4 * slot..4 * slot + 4];
            let x = [x[0].to_f64(), x[1].to_f64(), x[2].to_f64(), x[3].to_f64()];
            let m = &self.phi[16 * lag..16 * lag + 16];
            for r in 0..4 {
                acc[r] += m[4 * r] * x[0] + m[4 * r + 1] * x[1] + m[4 * r + 2] * x[2] + m[4 * r + 3] * x[3];
            }
        };
        for slot in (0..cursor).rev() {
            visit(slot, &mut acc, lag);
            lag += 1;
        }
        for slot in (cursor..self.p).rev() {
            visit(slot, &mut acc, lag);
            lag += 1;
        }
        acc
    }

    /// Advance a ring buffer stored as a flat slice; returns the new vector.
    #[inline]
    pub fn step_ring<T: LagScalar>(&self, ring: &mut [T], cursor: &mut usize, eps: &[f64; 4]) -> [f64; 4] {
        let mean = self.predict(ring, *cursor);
        let u = self.innovation(eps);
        let x = [mean[0] + u[0], mean[1] + u[1], mean[2] + u[2], mean[3] + u[3]];
        let c = *cursor;
        for k in 0..4 {
            ring[4 * c + k] = T::from_f64(x[k]);
        }
        *cursor = if c + 1 == self.p { 0 } else { c + 1 };
        x
    }

    pub fn step(&self, buf: &mut LagBuffer, eps: [f64; 4]) -> [f64; 4] {
        let mut cursor = buf.cursor;
        let x = self.step_ring(&mut buf.data, &mut cursor, &eps);
        buf.cursor = cursor;
        x
    }
}

/// Companion-matrix spectral radius by power iteration.
///
/// Each iteration fits `F^2 x = a F x + b x` in the least-squares sense; the
/// roots of `t^2 - a t - b` capture a dominant complex-conjugate (or `+-`)
/// pair, for which the plain norm ratio oscillates. When `F x` is parallel to
/// `x` the norm ratio is used instead.
pub fn spectral_radius(phi: &[M4]) -> Result<f64, SvarError> {
    let p = phi.len();
    if p == 0 {
        return Err(SvarError::BadOrder(0));
    }
    let d = 4 * p;
    let apply = |x: &[f64], y: &mut [f64]| {
        let mut top = [0.0; 4];
        for (i, m) in phi.iter().enumerate() {
            let v = &x[4 * i..4 * i + 4];
            for r in 0..4 {
                top[r] += m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2] + m[r][3] * v[3];
            }
        }
        y[4..d].copy_from_slice(&x[0..d - 4]);
        y[..4].copy_from_slice(&top);
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut rng = StreamRng::new(0x5eed, Domain::Generate, 0x5bec);
    let mut x: Vec<f64> = (0..d).map(|_| 1.0 + 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = dot(&x, &x).sqrt();
    x.iter_mut().for_each(|v| *v /= norm);
    let mut y1 = vec![0.0; d];
    let mut y2 = vec![0.0; d];
    let mut prev = f64::NAN;
    let mut stable = 0;
    for _ in 0..POWER_MAX_ITER {
        apply(&x, &mut y1);
        let n1 = dot(&y1, &y1).sqrt();
        if n1 == 0.0 || !n1.is_finite() {
            return if n1 == 0.0 {
                Ok(0.0)
            } else {
                Err(SvarError::NoConvergence(POWER_MAX_ITER))
            };
        }
        apply(&y1, &mut y2);
        let g11 = dot(&y1, &y1);
        let g12 = dot(&y1, &x);
        let g22 = dot(&x, &x);
        let det = g11 * g22 - g12 * g12;
        let est = if det > 1e-10 * g11 * g22 {
            let r1 = dot(&y2, &y1);
            let r2 = dot(&y2, &x);
            let a = (r1 * g22 - r2 * g12) / det;
            let b = (g11 * r2 - g12 * r1) / det;
            let disc = a * a + 4.0 * b;
            if disc < 0.0 {
                (-b).sqrt()
            } else {
                let s = disc.sqrt();
                ((a + s) * 0.5).abs().max(((a - s) * 0.5).abs())
            }
        } else {
            n1
        };
        if (est - prev).abs() <= POWER_TOL * est.max(1e-300) || (est - prev).abs() < 1e-14 {
            stable += 1;
            if stable >= 3 {
                return Ok(est);
            }
        } else {
            stable = 0;
        }
        prev = est;
        for (xi, yi) in x.iter_mut().zip(&y1) {
            *xi = yi / n1;
        }
    }
    Err(SvarError::NoConvergence(POWER_MAX_ITER))
}
