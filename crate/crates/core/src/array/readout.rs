use serde::{Deserialize, Serialize};

/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380649e-23;
/// Elementary charge (C).
pub const Q_E: f64 = 1.602176634e-19;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutConfig {
    /// Read voltage (V).
    pub u_read: f64,
    /// Measurement bandwidth (Hz).
    pub delta_f: f64,
    /// Temperature (K).
    pub temperature: f64,
    pub n_bits: u32,
    /// ADC range (A).
    pub i_min: f64,
    pub i_max: f64,
    pub noise_enabled: bool,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        Self {
            u_read: 0.2,
            delta_f: 1e6,
            temperature: 300.0,
            n_bits: 4,
            i_min: 0.0,
            i_max: 40e-6,
            noise_enabled: true,
        }
    }
}

/// One noisy, digitized read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Readout {
    pub i_noisy: f64,
    pub code: u16,
    pub i_dequantized: f64,
}

impl ReadoutConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.i_max > self.i_min) {
            return Err("i_max must exceed i_min".into());
        }
        if !(1..=16).contains(&self.n_bits) {
            return Err(format!("n_bits must be in 1..=16, got {}", self.n_bits));
        }
        if !(self.delta_f > 0.0) {
            return Err("delta_f must be positive".into());
        }
        if !(self.temperature > 0.0) {
            return Err("temperature must be positive".into());
        }
        if self.u_read == 0.0 || !self.u_read.is_finite() {
            return Err("u_read must be finite and non-zero".into());
        }
        Ok(())
    }

    /// Thermal plus shot noise standard deviation at read current `i`.
    #[inline]
    pub fn sigma(&self, i: f64) -> f64 {
        let a = i.abs();
        (4.0 * K_B * self.temperature * a * self.delta_f / self.u_read.abs() + 2.0 * Q_E * a * self.delta_f)
            .sqrt()
    }

    #[inline]
    pub fn levels(&self) -> u32 {
        (1u32 << self.n_bits) - 1
    }

    #[inline]
    pub fn quantize(&self, i: f64) -> u16 {
        let levels = self.levels() as f64;
        let x = ((i - self.i_min) / (self.i_max - self.i_min) * levels).round();
        x.clamp(0.0, levels) as u16
    }

    #[inline]
    pub fn dequantize(&self, code: u16) -> f64 {
        self.i_min + code as f64 * (self.i_max - self.i_min) / self.levels() as f64
    }

    /// Digitize a read current with the standard-normal draw `z`.
    #[inline]
    pub fn digitize(&self, i_read: f64, z: f64) -> Readout {
        let i_noisy = if self.noise_enabled {
            i_read + self.sigma(i_read) * z
        } else {
            i_read
        };
        let code = self.quantize(i_noisy);
        Readout {
            i_noisy,
            code,
            i_dequantized: self.dequantize(code),
        }
    }
}
