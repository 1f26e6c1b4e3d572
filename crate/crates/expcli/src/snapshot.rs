//! "R2U1" parameter snapshots.
//!
//! Layout: the magic `R2U1`; a u32 entry count; per entry a u32 name length,
//! the UTF-8 name, a u32 rank and `rank` u64 dimensions; a u64 value count;
//! then the values as f64. All integers and floats are little-endian.

use std::path::Path;

use unlearn_prep::models::{Layout, ParamState, Role};
use unlearn_prep::{Params64, Vector};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"R2U1";

pub fn encode(p: &Params64) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * p.values().len());
    out.extend_from_slice(MAGIC);
    let entries = p.layout().entries();
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
        for &d in &e.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    out.extend_from_slice(&(p.values().len() as u64).to_le_bytes());
    for v in p.values().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated {what}"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses a snapshot; the architecture is recovered from the layout.
pub fn decode(bytes: &[u8], role: Role) -> std::result::Result<Params64, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err("bad magic (expected R2U1)".into());
    }
    let count = r.u32("entry count")?;
    let mut shapes = Vec::new();
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| "entry name is not UTF-8".to_string())?;
        let rank = r.u32("rank")?;
        let shape = (0..rank)
            .map(|_| r.u64("dimension").map(|d| d as usize))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        shapes.push((name.to_string(), shape));
    }
    let layout = Layout::from_shapes(shapes);
    let n = r.u64("value count")? as usize;
    if n != layout.total() {
        return Err(format!(
            "value count {n} does not match layout total {}",
            layout.total()
        ));
    }
    let raw = r.take(n.checked_mul(8).ok_or("value count overflow")?, "values")?;
    if r.pos != bytes.len() {
        return Err("trailing bytes after values".into());
    }
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let spec = layout.infer_spec().map_err(|e| e.to_string())?;
    ParamState::from_values(spec, Vector::new(values), role).map_err(|e| e.to_string())
}

pub fn load(path: &Path, role: Role) -> Result<Params64> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes, role).map_err(|reason| CliError::Snapshot {
        path: path.to_path_buf(),
        reason,
    })
}
