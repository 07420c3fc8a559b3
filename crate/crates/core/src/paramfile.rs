//! Binary parameter file.
//!
//! Layout (little endian):
//!
//! ```text
//! "SSYN"  u16 version  u32 section_count
//! section_count x { u32 tag, u64 payload_len, payload }
//! u32 CRC-32 of everything before it
//! ```
//!
//! All model parameters are stored as `f64`. Sections:
//!
//! | tag | content |
//! |-----|---------|
//! | 1 | conduction: `u0`, HHRS (6), LLRS (4) |
//! | 2 | normalizing map: 4 x 6 coefficients |
//! | 3 | SVAR model (repeatable): `u32 p`, A (16), B diag (4), C (16 p), Phi (16 p), intercept (4), Sigma_u (16), chol (16) |
//! | 4 | DtD covariance (16) |
//! | 5 | defaults: `U_max`, `a`, `u_read`, `delta_f`, `T`, `n_bits`, `i_min`, `i_max`, `noise` |
//!
//! Unknown tags are skipped.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::ReadoutConfig;
use crate::conduction::{ConductionModel, DEFAULT_U_MAX};
use crate::linalg::M4;
use crate::svar::{SvarModel, MAX_ORDER, MIN_ORDER};
use crate::transform::NormalizingMap;
use crate::waveform::FeatureVector;

pub const MAGIC: &[u8; 4] = b"SSYN";
pub const VERSION: u16 = 1;

pub const TAG_CONDUCTION: u32 = 1;
pub const TAG_TRANSFORM: u32 = 2;
pub const TAG_SVAR: u32 = 3;
pub const TAG_DTD: u32 = 4;
pub const TAG_DEFAULTS: u32 = 5;

const HEADER_LEN: usize = 4 + 2 + 4;
const SECTION_HEADER_LEN: usize = 4 + 8;

/// Tolerance of the identification identity checked on load.
pub const IDENTITY_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("not a parameter file (bad magic)")]
    BadMagic,
    #[error("unsupported parameter file version {0} (expected {VERSION})")]
    UnsupportedVersion(u16),
    #[error("checksum mismatch (stored {stored:08x}, computed {computed:08x}); file corrupt or truncated")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("file is truncated")]
    Truncated,
    #[error("missing section: {0}")]
    MissingSection(&'static str),
    #[error("malformed section {tag}: {msg}")]
    Malformed { tag: u32, msg: String },
    #[error("invalid bundle: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Defaults {
    pub u_max: f64,
    /// DtD scale factor.
    pub a: f64,
    pub readout: ReadoutConfig,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            u_max: DEFAULT_U_MAX,
            a: 1.0,
            readout: ReadoutConfig::default(),
        }
    }
}

/// Everything needed to simulate devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBundle {
    pub version: u16,
    pub conduction: ConductionModel,
    pub map: NormalizingMap,
    /// SVAR models, one per stored order.
    pub models: Vec<SvarModel>,
    /// Covariance of the normalized fitting data (DtD spread).
    pub sigma: M4,
    pub defaults: Defaults,
}

struct Writer(Vec<u8>);

impl Writer {
    fn f64s<'a>(&mut self, v: impl IntoIterator<Item = &'a f64>) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn m4(&mut self, m: &M4) {
        self.f64s(m.iter().flatten());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    tag: u32,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ParamError> {
        if self.pos + n > self.buf.len() {
            return Err(ParamError::Malformed {
                tag: self.tag,
                msg: "payload shorter than its contents".into(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, ParamError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, ParamError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn arr<const N: usize>(&mut self) -> Result<[f64; N], ParamError> {
        let mut out = [0.0; N];
        for v in out.iter_mut() {
            *v = self.f64()?;
        }
        Ok(out)
    }
    fn m4(&mut self) -> Result<M4, ParamError> {
        let mut m = [[0.0; 4]; 4];
        for row in m.iter_mut() {
            *row = self.arr::<4>()?;
        }
        Ok(m)
    }
    fn finish(&self) -> Result<(), ParamError> {
        if self.pos != self.buf.len() {
            return Err(ParamError::Malformed {
                tag: self.tag,
                msg: format!("{} trailing bytes", self.buf.len() - self.pos),
            });
        }
        Ok(())
    }
}

fn section(out: &mut Vec<u8>, tag: u32, payload: &[u8]) {
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

impl ParameterBundle {
    pub fn new(
        conduction: ConductionModel,
        map: NormalizingMap,
        mut models: Vec<SvarModel>,
        sigma: M4,
        defaults: Defaults,
    ) -> Result<Self, ParamError> {
        models.sort_by_key(|m| m.p);
        let b = Self {
            version: VERSION,
            conduction,
            map,
            models,
            sigma,
            defaults,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn model(&self, p: usize) -> Option<&SvarModel> {
        self.models.iter().find(|m| m.p == p)
    }

    pub fn orders(&self) -> Vec<usize> {
        self.models.iter().map(|m| m.p).collect()
    }

    /// Model of order `p`, or the highest stored order when `p` is `None`.
    pub fn select(&self, p: Option<usize>) -> Option<&SvarModel> {
        match p {
            Some(p) => self.model(p),
            None => self.models.last(),
        }
    }

    /// `n` feature vectors from the model of order `p` (see [`Self::select`]),
    /// mapped back to physical units.
    pub fn generate(&self, p: Option<usize>, n: usize, seed: u64) -> Option<Vec<FeatureVector>> {
        let model = self.select(p)?;
        Some(model.generate(n, seed).iter().map(|z| self.map.inverse(z)).collect())
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let inv = |m: String| ParamError::Invalid(m);
        self.conduction.validate().map_err(|e| inv(e.to_string()))?;
        self.map.check().map_err(|e| inv(e.to_string()))?;
        if self.models.is_empty() {
            return Err(ParamError::MissingSection("svar"));
        }
        for w in self.models.windows(2) {
            if w[0].p == w[1].p {
                return Err(inv(format!("duplicate model order {}", w[0].p)));
            }
        }
        for m in &self.models {
            if !(MIN_ORDER..=MAX_ORDER).contains(&m.p) {
                return Err(inv(format!("model order {} out of range", m.p)));
            }
            m.validate(IDENTITY_TOL).map_err(|e| inv(format!("order {}: {e}", m.p)))?;
        }
        if crate::linalg::cholesky4(&self.sigma).is_none() {
            return Err(inv("DtD covariance is not positive definite".into()));
        }
        self.defaults.readout.validate().map_err(inv)?;
        if !(self.defaults.u_max > 0.0) || !(self.defaults.a >= 0.0) {
            return Err(inv("defaults need U_max > 0 and a >= 0".into()));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let count = 4 + self.models.len() as u32;
        out.extend_from_slice(&count.to_le_bytes());

        let mut w = Writer(Vec::new());
        w.f64s([&self.conduction.u0]);
        w.f64s(&self.conduction.hhrs);
        w.f64s(&self.conduction.llrs);
        section(&mut out, TAG_CONDUCTION, &w.0);

        let mut w = Writer(Vec::new());
        w.f64s(self.map.gamma.iter().flatten());
        section(&mut out, TAG_TRANSFORM, &w.0);

        for m in &self.models {
            let mut w = Writer((m.p as u32).to_le_bytes().to_vec());
            w.m4(&m.a);
            w.f64s(&m.b);
            for c in &m.c {
                w.m4(c);
            }
            for f in &m.phi {
                w.m4(f);
            }
            w.f64s(&m.intercept);
            w.m4(&m.sigma_u);
            w.m4(&m.chol_u);
            section(&mut out, TAG_SVAR, &w.0);
        }

        let mut w = Writer(Vec::new());
        w.m4(&self.sigma);
        section(&mut out, TAG_DTD, &w.0);

        let d = &self.defaults;
        let r = &d.readout;
        let mut w = Writer(Vec::new());
        w.f64s(&[
            d.u_max,
            d.a,
            r.u_read,
            r.delta_f,
            r.temperature,
            r.n_bits as f64,
            r.i_min,
            r.i_max,
            if r.noise_enabled { 1.0 } else { 0.0 },
        ]);
        section(&mut out, TAG_DEFAULTS, &w.0);

        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ParamError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(ParamError::BadMagic);
        }
        if bytes.len() < 6 {
            return Err(ParamError::Truncated);
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(ParamError::UnsupportedVersion(version));
        }
        if bytes.len() < HEADER_LEN + 4 {
            return Err(ParamError::Truncated);
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(ParamError::ChecksumMismatch { stored, computed });
        }
        let count = u32::from_le_bytes(body[6..10].try_into().unwrap()) as usize;

        let mut conduction = None;
        let mut map = None;
        let mut models = Vec::new();
        let mut sigma = None;
        let mut defaults = None;
        let mut pos = HEADER_LEN;
        let mut seen = 0;
        while pos < body.len() {
            if pos + SECTION_HEADER_LEN > body.len() {
                return Err(ParamError::Truncated);
            }
            let tag = u32::from_le_bytes(body[pos..pos + 4].try_into().unwrap());
            let len = u64::from_le_bytes(body[pos + 4..pos + 12].try_into().unwrap()) as usize;
            pos += SECTION_HEADER_LEN;
            if len > body.len() - pos {
                return Err(ParamError::Truncated);
            }
            let mut r = Reader {
                buf: &body[pos..pos + len],
                pos: 0,
                tag,
            };
            pos += len;
            seen += 1;
            match tag {
                TAG_CONDUCTION => {
                    let u0 = r.f64()?;
                    let hhrs = r.arr::<6>()?;
                    let llrs = r.arr::<4>()?;
                    r.finish()?;
                    conduction = Some(ConductionModel { hhrs, llrs, u0 });
                }
                TAG_TRANSFORM => {
                    let mut gamma = [[0.0; 6]; 4];
                    for g in gamma.iter_mut() {
                        *g = r.arr::<6>()?;
                    }
                    r.finish()?;
                    map = Some(NormalizingMap { gamma });
                }
                TAG_SVAR => {
                    let p = r.u32()? as usize;
                    if !(MIN_ORDER..=MAX_ORDER).contains(&p) {
                        return Err(ParamError::Malformed {
                            tag,
                            msg: format!("model order {p} out of range"),
                        });
                    }
                    let a = r.m4()?;
                    let b = r.arr::<4>()?;
                    let c = (0..p).map(|_| r.m4()).collect::<Result<Vec<_>, _>>()?;
                    let phi = (0..p).map(|_| r.m4()).collect::<Result<Vec<_>, _>>()?;
                    let intercept = r.arr::<4>()?;
                    let sigma_u = r.m4()?;
                    let chol_u = r.m4()?;
                    r.finish()?;
                    models.push(SvarModel {
                        p,
                        a,
                        b,
                        c,
                        phi,
                        intercept,
                        sigma_u,
                        chol_u,
                    });
                }
                TAG_DTD => {
                    sigma = Some(r.m4()?);
                    r.finish()?;
                }
                TAG_DEFAULTS => {
                    let v = r.arr::<9>()?;
                    r.finish()?;
                    defaults = Some(Defaults {
                        u_max: v[0],
                        a: v[1],
                        readout: ReadoutConfig {
                            u_read: v[2],
                            delta_f: v[3],
                            temperature: v[4],
                            n_bits: v[5] as u32,
                            i_min: v[6],
                            i_max: v[7],
                            noise_enabled: v[8] != 0.0,
                        },
                    });
                }
                other => log::debug!("skipping unknown section tag {other}"),
            }
        }
        if seen != count {
            return Err(ParamError::Invalid(format!(
                "header announces {count} sections, found {seen}"
            )));
        }
        let mut bundle = Self {
            version,
            conduction: conduction.ok_or(ParamError::MissingSection("conduction"))?,
            map: map.ok_or(ParamError::MissingSection("transform"))?,
            models,
            sigma: sigma.ok_or(ParamError::MissingSection("dtd"))?,
            defaults: defaults.ok_or(ParamError::MissingSection("defaults"))?,
        };
        bundle.models.sort_by_key(|m| m.p);
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<(), ParamError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ParamError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes to JSON")
    }
}
