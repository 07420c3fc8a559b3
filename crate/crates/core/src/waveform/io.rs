//! Trace and feature file formats.
//!
//! * Trace CSV: header `u,i`, one sample per row (V, A).
//! * Trace binary (`.iuw`): magic `IUW0`, little-endian `u32` sample count,
//!   then interleaved `f32` pairs `(u, i)`.
//! * Features CSV: header `cycle,r_h,u_s,r_l,u_r`, SI units.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FeatureVector, RawTrace, WaveformError};

pub const IUW_MAGIC: &[u8; 4] = b"IUW0";

fn is_iuw(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("iuw"))
}

/// Read a trace, choosing the format from the file extension.
pub fn read_trace(path: &Path, samples_per_cycle: usize) -> Result<RawTrace, WaveformError> {
    if is_iuw(path) {
        read_trace_iuw(path, samples_per_cycle)
    } else {
        read_trace_csv(path, samples_per_cycle)
    }
}

pub fn write_trace(path: &Path, trace: &RawTrace) -> Result<(), WaveformError> {
    if is_iuw(path) {
        write_trace_iuw(path, trace)
    } else {
        write_trace_csv(path, trace)
    }
}

pub fn read_trace_csv(path: &Path, samples_per_cycle: usize) -> Result<RawTrace, WaveformError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| WaveformError::Format(format!("missing column `{name}`")))
    };
    let (cu, ci) = (col("u")?, col("i")?);
    let mut u = Vec::new();
    let mut i = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |c: usize| -> Result<f64, WaveformError> {
            let s = rec.get(c).unwrap_or("").trim();
            s.parse()
                .map_err(|_| WaveformError::Format(format!("bad number `{s}` on line {}", line + 2)))
        };
        u.push(parse(cu)?);
        i.push(parse(ci)?);
    }
    RawTrace::new(u, i, samples_per_cycle)
}

pub fn write_trace_csv(path: &Path, trace: &RawTrace) -> Result<(), WaveformError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "u,i")?;
    for (u, i) in trace.u.iter().zip(&trace.i) {
        writeln!(w, "{u},{i}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_iuw(path: &Path, samples_per_cycle: usize) -> Result<RawTrace, WaveformError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut head = [0u8; 8];
    r.read_exact(&mut head)?;
    if &head[..4] != IUW_MAGIC {
        return Err(WaveformError::Format("not an IUW0 file".into()));
    }
    let n = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let mut buf = Vec::with_capacity(8 * n);
    r.read_to_end(&mut buf)?;
    if buf.len() != 8 * n {
        return Err(WaveformError::Format(format!(
            "expected {} sample bytes, found {}",
            8 * n,
            buf.len()
        )));
    }
    let mut u = Vec::with_capacity(n);
    let mut i = Vec::with_capacity(n);
    for pair in buf.chunks_exact(8) {
        u.push(f32::from_le_bytes(pair[..4].try_into().unwrap()) as f64);
        i.push(f32::from_le_bytes(pair[4..].try_into().unwrap()) as f64);
    }
    RawTrace::new(u, i, samples_per_cycle)
}

pub fn write_trace_iuw(path: &Path, trace: &RawTrace) -> Result<(), WaveformError> {
    let n = u32::try_from(trace.len())
        .map_err(|_| WaveformError::Format("trace too long for IUW0".into()))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(IUW_MAGIC)?;
    w.write_all(&n.to_le_bytes())?;
    for (u, i) in trace.u.iter().zip(&trace.i) {
        w.write_all(&(*u as f32).to_le_bytes())?;
        w.write_all(&(*i as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_features_csv<W: Write>(out: W, rows: &[(usize, FeatureVector)]) -> Result<(), WaveformError> {
    let mut w = BufWriter::new(out);
    writeln!(w, "cycle,r_h,u_s,r_l,u_r")?;
    for (c, f) in rows {
        writeln!(w, "{c},{},{},{},{}", f.r_h, f.u_s, f.r_l, f.u_r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_features(path: &Path, rows: &[(usize, FeatureVector)]) -> Result<(), WaveformError> {
    write_features_csv(File::create(path)?, rows)
}

pub fn load_features(path: &Path) -> Result<Vec<(usize, FeatureVector)>, WaveformError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let names = ["cycle", "r_h", "u_s", "r_l", "u_r"];
    let mut cols = [0usize; 5];
    for (k, name) in names.iter().enumerate() {
        cols[k] = headers
            .iter()
            .position(|h| h.trim() == *name)
            .ok_or_else(|| WaveformError::Format(format!("missing column `{name}`")))?;
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| rec.get(cols[k]).unwrap_or("").trim().to_string();
        let bad = |s: String| WaveformError::Format(format!("bad value `{s}` on line {}", line + 2));
        let cycle: usize = field(0).parse().map_err(|_| bad(field(0)))?;
        let mut v = [0.0; 4];
        for k in 0..4 {
            v[k] = field(k + 1).parse().map_err(|_| bad(field(k + 1)))?;
        }
        let f = FeatureVector::from_array(v);
        if !f.is_valid() {
            return Err(bad(format!("{v:?}")));
        }
        rows.push((cycle, f));
    }
    Ok(rows)
}
