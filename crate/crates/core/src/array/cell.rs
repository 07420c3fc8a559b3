use serde::{Deserialize, Serialize};

use crate::conduction::ConductionModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Phase {
    Hrs = 0,
    Lrs = 1,
    /// Intermediate state after a partial RESET.
    Irs = 2,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Hrs => "HRS",
            Phase::Lrs => "LRS",
            Phase::Irs => "IRS",
        }
    }
}

/// Resident state of one cell, excluding its lag history.
///
/// `features` holds the scaled features of the current cycle. While the cell
/// is in IRS the next cycle has already been realized and `features` holds
/// it; `anchor_r` / `anchor_u` then keep the LRS state and RESET voltage of
/// the cycle being reset, which define the RESET curve.
#[derive(Debug, Clone, Copy, PartialEq)]
#[repr(C)]
pub struct Cell {
    pub rng_counter: u64,
    pub features: [f32; 4],
    pub scale: [f32; 4],
    pub r: f32,
    pub u_reset: f32,
    pub anchor_r: f32,
    pub anchor_u: f32,
    pub cycle: u32,
    /// Next write slot of the lag ring buffer.
    pub cursor: u16,
    pub phase: Phase,
    _pad: u8,
}

const _: () = assert!(std::mem::size_of::<Cell>() == 64);

impl Cell {
    pub fn new(scale: [f32; 4]) -> Self {
        Self {
            rng_counter: 0,
            features: [0.0; 4],
            scale,
            r: 1.0,
            u_reset: 0.0,
            anchor_r: 0.0,
            anchor_u: 0.0,
            cycle: 0,
            cursor: 0,
            phase: Phase::Hrs,
            _pad: 0,
        }
    }

    pub fn r_h(&self) -> f64 {
        self.features[0] as f64
    }
    pub fn u_s(&self) -> f64 {
        self.features[1] as f64
    }
    pub fn r_l(&self) -> f64 {
        self.features[2] as f64
    }
    pub fn u_r(&self) -> f64 {
        self.features[3] as f64
    }
}

/// What a pulse did to a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    NoOp,
    Set,
    PartialReset,
    FullReset,
}

/// Shared parameters of the state machine.
#[derive(Debug, Clone)]
pub struct Dynamics {
    pub conduction: ConductionModel,
    pub u_max: f64,
}

impl Dynamics {
    #[inline]
    fn r_of(&self, res: f64) -> f32 {
        // Generated resistances are positive; a failure maps to the HHRS end.
        self.conduction.state_from_resistance(res).unwrap_or(1.0) as f32
    }

    #[inline]
    fn full_reset(&self, cell: &mut Cell) {
        cell.phase = Phase::Hrs;
        cell.cycle += 1;
        cell.r = self.r_of(cell.r_h());
        cell.u_reset = cell.features[3];
    }

    /// Apply one pulse of amplitude `u_a`.
    ///
    /// `next` realizes the features of the following cycle; it is called at
    /// most once, on the first RESET-branch entry from LRS.
    #[inline]
    pub fn transition<F>(&self, cell: &mut Cell, u_a: f64, next: F) -> Outcome
    where
        F: FnOnce(&mut Cell) -> [f64; 4],
    {
        // Thresholds are stored in f32; compare at that precision so that a
        // repeated amplitude is recognized as already applied.
        if (u_a as f32) > cell.u_reset {
            if cell.phase == Phase::Hrs {
                return Outcome::NoOp;
            }
            if cell.phase == Phase::Lrs {
                cell.anchor_r = cell.r;
                cell.anchor_u = cell.features[3];
                let f = next(cell);
                cell.features = f.map(|v| v as f32);
            }
            if u_a >= self.u_max {
                self.full_reset(cell);
                return Outcome::FullReset;
            }
            let r_next = self.r_of(cell.r_h()) as f64;
            let curve = self.conduction.build_reset_curve(
                cell.anchor_u as f64,
                cell.anchor_r as f64,
                r_next,
                self.u_max,
            );
            let Ok(curve) = curve else {
                self.full_reset(cell);
                return Outcome::FullReset;
            };
            let r = self
                .conduction
                .state_from_point(curve.eval(u_a), u_a)
                .unwrap_or(r_next);
            cell.phase = Phase::Irs;
            cell.r = r as f32;
            cell.u_reset = u_a as f32;
            return Outcome::PartialReset;
        }
        if (u_a as f32) <= -cell.features[1] {
            match cell.phase {
                Phase::Lrs => return Outcome::NoOp,
                Phase::Irs => cell.cycle += 1,
                Phase::Hrs => {}
            }
            cell.phase = Phase::Lrs;
            cell.r = self.r_of(cell.r_l());
            cell.u_reset = cell.features[3];
            return Outcome::Set;
        }
        Outcome::NoOp
    }
}
