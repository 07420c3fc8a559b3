//! Static conduction model.
//!
//! Every device state is a linear mixture of two fixed polynomials in the
//! applied voltage: the highest possible high-resistance state (HHRS) and the
//! lowest possible low-resistance state (LLRS),
//!
//! ```text
//! I(r, U) = r * I_HHRS(U) + (1 - r) * I_LLRS(U),   0 <= r <= 1
//! ```
//!
//! The state variable `r` is clamped to `[0, 1]` by every producer in this
//! module.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly;

/// Degree of the HHRS polynomial.
pub const HHRS_DEGREE: usize = 5;
/// Degree of the LLRS polynomial.
pub const LLRS_DEGREE: usize = 3;
/// Reference voltage for static resistance.
pub const DEFAULT_U0: f64 = 0.2;
/// Smallest admissible linear coefficient of a fitted conduction polynomial (A/V).
pub const MIN_LINEAR_COEFF: f64 = 1e-9;
/// Default absolute floor on `|I_LLRS(U) - I_HHRS(U)|` (A).
pub const DEFAULT_DEGENERATE_FLOOR: f64 = 1e-12;
/// Maximum voltage applied during cycling; the RESET curve ends here.
pub const DEFAULT_U_MAX: f64 = 1.5;
/// Minimum width of the RESET transition window (V).
pub const MIN_RESET_SPAN: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum ConductionError {
    #[error("I_LLRS and I_HHRS coincide at {u} V (difference {diff:e} A)")]
    DegenerateVoltage { u: f64, diff: f64 },
    #[error("resistance must be positive, got {0}")]
    NonPositiveResistance(f64),
    #[error("RESET window [{u_start}, {u_max}] V is narrower than 1 mV")]
    IllConditionedReset { u_start: f64, u_max: f64 },
    #[error("invalid conduction model: {0}")]
    Invalid(String),
}

/// HHRS/LLRS coefficient pair and reference voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductionModel {
    pub hhrs: [f64; HHRS_DEGREE + 1],
    pub llrs: [f64; LLRS_DEGREE + 1],
    pub u0: f64,
}

/// Quadratic connecting the LRS point at `u_start` to the next HRS at `u_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResetCurve {
    pub quad: [f64; 3],
    pub u_start: f64,
    pub u_max: f64,
}

impl ResetCurve {
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        poly::horner(&self.quad, u)
    }

    #[inline]
    pub fn slope(&self, u: f64) -> f64 {
        self.quad[1] + 2.0 * self.quad[2] * u
    }
}

impl ConductionModel {
    pub fn new(hhrs: [f64; 6], llrs: [f64; 4], u0: f64) -> Result<Self, ConductionError> {
        let m = Self { hhrs, llrs, u0 };
        m.validate()?;
        Ok(m)
    }

    /// Check the fit constraints and the ordering `I_LLRS(u0) > I_HHRS(u0) > 0`.
    pub fn validate(&self) -> Result<(), ConductionError> {
        if self.hhrs[0] != 0.0 || self.llrs[0] != 0.0 {
            return Err(ConductionError::Invalid("constant terms must be 0 A".into()));
        }
        if self.hhrs[1] < MIN_LINEAR_COEFF || self.llrs[1] < MIN_LINEAR_COEFF {
            return Err(ConductionError::Invalid(
                "linear coefficients must be >= 1 nA/V".into(),
            ));
        }
        if !(self.u0 > 0.0) {
            return Err(ConductionError::Invalid("u0 must be positive".into()));
        }
        let ih = self.i_hhrs(self.u0);
        let il = self.i_llrs(self.u0);
        if !(il > ih && ih > 0.0) {
            return Err(ConductionError::Invalid(format!(
                "need I_LLRS(u0) > I_HHRS(u0) > 0, got {il:e} and {ih:e}"
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn i_hhrs(&self, u: f64) -> f64 {
        poly::horner(&self.hhrs, u)
    }

    #[inline]
    pub fn i_llrs(&self, u: f64) -> f64 {
        poly::horner(&self.llrs, u)
    }

    /// Mixture current `r I_HHRS(u) + (1 - r) I_LLRS(u)`.
    #[inline]
    pub fn current(&self, r: f64, u: f64) -> f64 {
        r * self.i_hhrs(u) + (1.0 - r) * self.i_llrs(u)
    }

    /// Static resistance `u0 / I(r, u0)`.
    #[inline]
    pub fn static_resistance(&self, r: f64) -> f64 {
        self.u0 / self.current(r, self.u0)
    }

    /// State variable of the mixture curve passing through `(i, u)`.
    pub fn state_from_point(&self, i: f64, u: f64) -> Result<f64, ConductionError> {
        self.state_from_point_with_floor(i, u, DEFAULT_DEGENERATE_FLOOR)
    }

    pub fn state_from_point_with_floor(
        &self,
        i: f64,
        u: f64,
        floor: f64,
    ) -> Result<f64, ConductionError> {
        let il = self.i_llrs(u);
        let diff = il - self.i_hhrs(u);
        if diff.abs() < floor || u == 0.0 {
            return Err(ConductionError::DegenerateVoltage { u, diff });
        }
        Ok(((il - i) / diff).clamp(0.0, 1.0))
    }

    /// State variable whose static resistance (at `u0`) is `res`.
    pub fn state_from_resistance(&self, res: f64) -> Result<f64, ConductionError> {
        if !(res > 0.0) {
            return Err(ConductionError::NonPositiveResistance(res));
        }
        let il = self.i_llrs(self.u0);
        let ih = self.i_hhrs(self.u0);
        Ok(((il - self.u0 / res) / (il - ih)).clamp(0.0, 1.0))
    }

    /// Quadratic `q` with `q(u_reset) = I(r_lrs, u_reset)`,
    /// `q(u_max) = I(r_hrs_next, u_max)` and `q'(u_max) = 0`.
    ///
    /// The last two conditions put the vertex at `u_max`, so
    /// `q(U) = c + a (U - u_max)^2` with `c = I(r_hrs_next, u_max)` and `a`
    /// fixed by the first condition; the result is returned expanded in powers
    /// of `U`.
    pub fn build_reset_curve(
        &self,
        u_reset: f64,
        r_lrs: f64,
        r_hrs_next: f64,
        u_max: f64,
    ) -> Result<ResetCurve, ConductionError> {
        if !(u_max - u_reset >= MIN_RESET_SPAN) || !(u_reset > 0.0) {
            return Err(ConductionError::IllConditionedReset {
                u_start: u_reset,
                u_max,
            });
        }
        let c = self.current(r_hrs_next, u_max);
        let i_start = self.current(r_lrs, u_reset);
        let d = u_reset - u_max;
        let a = (i_start - c) / (d * d);
        Ok(ResetCurve {
            quad: [c + a * u_max * u_max, -2.0 * a * u_max, a],
            u_start: u_reset,
            u_max,
        })
    }

    /// Estimate HHRS/LLRS from per-cycle polynomial fits by pooling the most
    /// extreme cycles.
    ///
    /// HRS fits whose static resistance lies in the top `fraction` and LRS fits
    /// in the bottom `fraction` are each sampled on a voltage grid spanning
    /// `hrs_range` / `lrs_range`; one constrained polynomial is fit to each
    /// pooled sample.
    pub fn estimate_limits(
        hrs: &[(f64, Vec<f64>)],
        lrs: &[(f64, Vec<f64>)],
        fraction: f64,
        hrs_range: (f64, f64),
        lrs_range: (f64, f64),
        u0: f64,
    ) -> Result<Self, ConductionError> {
        fn pooled(
            fits: &[(f64, Vec<f64>)],
            fraction: f64,
            top: bool,
            range: (f64, f64),
            degree: usize,
        ) -> Result<Vec<f64>, ConductionError> {
            if fits.is_empty() {
                return Err(ConductionError::Invalid("no per-cycle fits to pool".into()));
            }
            let mut order: Vec<usize> = (0..fits.len()).collect();
            order.sort_by(|&a, &b| fits[a].0.total_cmp(&fits[b].0));
            if top {
                order.reverse();
            }
            let k = ((fits.len() as f64 * fraction).ceil() as usize).clamp(1, fits.len());
            let grid: Vec<f64> = (0..=64)
                .map(|j| range.0 + (range.1 - range.0) * j as f64 / 64.0)
                .collect();
            let mut xs = Vec::with_capacity(k * grid.len());
            let mut ys = Vec::with_capacity(k * grid.len());
            for &idx in &order[..k] {
                for &u in &grid {
                    xs.push(u);
                    ys.push(poly::horner(&fits[idx].1, u));
                }
            }
            poly::fit_through_origin(&xs, &ys, degree, MIN_LINEAR_COEFF, degree + 1)
                .map_err(|e| ConductionError::Invalid(e.to_string()))
        }
        let h = pooled(hrs, fraction, true, hrs_range, HHRS_DEGREE)?;
        let l = pooled(lrs, fraction, false, lrs_range, LLRS_DEGREE)?;
        let mut hhrs = [0.0; HHRS_DEGREE + 1];
        let mut llrs = [0.0; LLRS_DEGREE + 1];
        hhrs.copy_from_slice(&h);
        llrs.copy_from_slice(&l);
        Self::new(hhrs, llrs, u0)
    }
}

impl Default for ConductionModel {
    /// Representative HfO2-like limits: HHRS about 1.1 MOhm and LLRS about
    /// 4 kOhm at 0.2 V, with a mild cubic nonlinearity.
    fn default() -> Self {
        Self {
            hhrs: [0.0, 8.0e-7, 1.0e-7, 1.5e-6, 0.0, 2.0e-7],
            llrs: [0.0, 2.5e-4, 0.0, 2.0e-5],
            u0: DEFAULT_U0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model() -> ConductionModel {
        ConductionModel::default()
    }

    #[test]
    fn default_model_is_valid() {
        model().validate().unwrap();
    }

    #[test]
    fn mixture_endpoints() {
        let m = model();
        for &u in &[-1.0, 0.2, 0.7, 1.5] {
            assert_eq!(m.current(1.0, u), m.i_hhrs(u));
            assert_eq!(m.current(0.0, u), m.i_llrs(u));
        }
        assert_eq!(m.current(0.5, 0.0), 0.0);
    }

    #[test]
    fn state_from_point_endpoints() {
        let m = model();
        assert_eq!(m.state_from_point(m.i_llrs(0.5), 0.5).unwrap(), 0.0);
        assert_eq!(m.state_from_point(m.i_hhrs(0.5), 0.5).unwrap(), 1.0);
    }

    #[test]
    fn state_from_point_rejects_degenerate_voltage() {
        let m = model();
        assert!(matches!(
            m.state_from_point(0.0, 0.0),
            Err(ConductionError::DegenerateVoltage { .. })
        ));
    }

    #[test]
    fn state_from_resistance_endpoints() {
        let m = model();
        let r_l = m.u0 / m.i_llrs(m.u0);
        let r_h = m.u0 / m.i_hhrs(m.u0);
        assert!(m.state_from_resistance(r_l).unwrap().abs() < 1e-12);
        assert!((m.state_from_resistance(r_h).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            m.state_from_resistance(0.0),
            Err(ConductionError::NonPositiveResistance(_))
        ));
        assert!(m.state_from_resistance(-5.0).is_err());
    }

    #[test]
    fn out_of_range_resistances_clamp() {
        let m = model();
        assert_eq!(m.state_from_resistance(10.0).unwrap(), 0.0);
        assert_eq!(m.state_from_resistance(1e12).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn point_round_trip(r in 0.0f64..1.0, u in prop_oneof![-1.4f64..-0.05, 0.05f64..1.5]) {
            let m = model();
            let i = m.current(r, u);
            let r2 = m.state_from_point(i, u).unwrap();
            let i2 = m.current(r2, u);
            prop_assert!((i2 - i).abs() <= 1e-12 * i.abs().max(1e-12));
        }

        #[test]
        fn resistance_round_trip(r in 0.0f64..1.0) {
            let m = model();
            let res = m.static_resistance(r);
            let back = m.static_resistance(m.state_from_resistance(res).unwrap());
            prop_assert!((back - res).abs() <= 1e-9 * res);
        }

        #[test]
        fn current_strictly_decreasing_in_r(u in 0.05f64..1.5, r in 0.0f64..0.99) {
            let m = model();
            prop_assert!(m.current(r + 0.01, u) < m.current(r, u));
        }

        #[test]
        fn reset_curve_boundary_conditions(
            u_start in 0.5f64..1.2,
            r_lrs in 0.2f64..0.7,
            r_hrs in 0.9f64..1.0,
        ) {
            let m = model();
            let q = m.build_reset_curve(u_start, r_lrs, r_hrs, DEFAULT_U_MAX).unwrap();
            prop_assert!((q.eval(u_start) - m.current(r_lrs, u_start)).abs() < 1e-12);
            prop_assert!((q.eval(DEFAULT_U_MAX) - m.current(r_hrs, DEFAULT_U_MAX)).abs() < 1e-12);
            prop_assert!(q.slope(DEFAULT_U_MAX).abs() < 1e-12);
        }
    }

    #[test]
    fn same_state_reset_curve() {
        let m = model();
        let r = 0.95;
        let q = m.build_reset_curve(0.72, r, r, DEFAULT_U_MAX).unwrap();
        assert!((q.eval(0.72) - m.current(r, 0.72)).abs() < 1e-15);
        assert!((q.eval(1.5) - m.current(r, 1.5)).abs() < 1e-15);
        assert!(q.slope(1.5).abs() < 1e-15);
    }

    #[test]
    fn narrow_reset_window_rejected() {
        let m = model();
        assert!(matches!(
            m.build_reset_curve(1.4995, 0.3, 0.9, 1.5),
            Err(ConductionError::IllConditionedReset { .. })
        ));
    }

    #[test]
    fn invalid_models_rejected() {
        let mut m = model();
        m.hhrs[0] = 1e-9;
        assert!(m.validate().is_err());
        let mut m = model();
        m.llrs[1] = 0.0;
        assert!(m.validate().is_err());
        // Swapped roles: LLRS less conductive than HHRS.
        let m = ConductionModel {
            hhrs: [0.0, 2.5e-4, 0.0, 0.0, 0.0, 0.0],
            llrs: [0.0, 1e-6, 0.0, 0.0],
            u0: 0.2,
        };
        assert!(m.validate().is_err());
    }

    #[test]
    fn pooled_limits_bracket_the_cycles() {
        let m = model();
        let hrs: Vec<(f64, Vec<f64>)> = (0..200)
            .map(|k| {
                let r = 0.9 + 0.0005 * k as f64;
                let c: Vec<f64> = (0..6)
                    .map(|j| r * m.hhrs[j] + (1.0 - r) * m.llrs.get(j).copied().unwrap_or(0.0))
                    .collect();
                (m.static_resistance(r), c)
            })
            .collect();
        let lrs: Vec<(f64, Vec<f64>)> = (0..200)
            .map(|k| {
                let r = 0.3 + 0.001 * k as f64;
                let c: Vec<f64> = (0..4).map(|j| r * m.hhrs[j] + (1.0 - r) * m.llrs[j]).collect();
                (m.static_resistance(r), c)
            })
            .collect();
        let est =
            ConductionModel::estimate_limits(&hrs, &lrs, 0.01, (-0.7, 1.5), (-0.7, 0.7), 0.2)
                .unwrap();
        // The pooled fit is exact for mixtures, so it reproduces the mean
        // current of the two most extreme curves on each side.
        let mean_i = |fits: &[(f64, Vec<f64>)]| {
            fits.iter().map(|f| poly::horner(&f.1, 0.2)).sum::<f64>() / fits.len() as f64
        };
        let (ih, il) = (mean_i(&hrs[198..]), mean_i(&lrs[..2]));
        assert!((est.i_hhrs(0.2) / ih - 1.0).abs() < 1e-6, "{} vs {ih}", est.i_hhrs(0.2));
        assert!((est.i_llrs(0.2) / il - 1.0).abs() < 1e-6, "{} vs {il}", est.i_llrs(0.2));
    }
}
