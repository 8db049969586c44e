//! Middlebury `.flo` flow-file interchange format: a float magic tag
//! ("PIEH" = 202021.25), 32-bit width and height, then row-major interleaved
//! (u, v) 32-bit floats, all little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::FlowField;

pub const FLO_MAGIC: f32 = 202021.25;

/// Flow values with magnitude above this are the benchmark's
/// "unknown" sentinel.
pub const UNKNOWN_THRESHOLD: f32 = 1e9;

/// Read a `.flo` file. Returns the field plus a validity mask; components
/// above the unknown sentinel threshold are masked out.
pub fn read_flo(path: impl AsRef<Path>) -> Result<(FlowField, Vec<bool>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_flo(&bytes)
}

/// Parse `.flo` bytes; see [`read_flo`].
pub fn parse_flo(bytes: &[u8]) -> Result<(FlowField, Vec<bool>)> {
    if bytes.len() < 12 {
        return Err(Error::Format("flo file shorter than 12-byte header".into()));
    }
    let magic = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if magic != FLO_MAGIC {
        return Err(Error::Format(format!("bad flo magic {magic} (expected {FLO_MAGIC})")));
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width < 1 || height < 1 {
        return Err(Error::Format(format!("bad flo dimensions {width}x{height}")));
    }
    let (width, height) = (width as usize, height as usize);
    let expected = 12 + width * height * 2 * 4;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "truncated flo payload: {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let n = width * height;
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for i in 0..n {
        let off = 12 + i * 8;
        let fu = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        let fv = f32::from_le_bytes(bytes[off + 4..off + 8].try_into().unwrap());
        let valid =
            fu.is_finite() && fv.is_finite() && fu.abs() < UNKNOWN_THRESHOLD && fv.abs() < UNKNOWN_THRESHOLD;
        mask.push(valid);
        if valid {
            u.push(fu as f64);
            v.push(fv as f64);
        } else {
            u.push(0.0);
            v.push(0.0);
        }
    }
    Ok((FlowField::new(width, height, u, v)?, mask))
}

/// Serialize a flow field to `.flo` bytes; deterministic.
pub fn flo_bytes(w: &FlowField) -> Result<Vec<u8>> {
    if !w.is_finite() {
        return Err(Error::Numerical("cannot write non-finite flow field".into()));
    }
    let mut out = Vec::with_capacity(12 + w.len() * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w.width() as i32).to_le_bytes());
    out.extend_from_slice(&(w.height() as i32).to_le_bytes());
    for y in 0..w.height() {
        for x in 0..w.width() {
            out.extend_from_slice(&(w.u(x, y) as f32).to_le_bytes());
            out.extend_from_slice(&(w.v(x, y) as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_flo(w: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = flo_bytes(w)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
