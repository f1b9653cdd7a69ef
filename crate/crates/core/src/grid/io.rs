//! Field container formats.
//!
//! Binary container (little-endian):
//!
//! ```text
//! u32 n | u32 nodes_per_axis × n | f64 period × n | f64 values (row-major)
//! ```
//!
//! CSV export is intended for small grids: one row per node with the
//! node coordinates followed by the value.

use std::path::Path;
use std::sync::Arc;

use super::{Grid, GridError, GridSpec, ScalarField};

pub fn field_to_bytes(f: &ScalarField) -> Vec<u8> {
    let grid = f.grid();
    let mut out = Vec::with_capacity(4 + grid.n() * 12 + f.len() * 8);
    out.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    for &m in grid.nodes() {
        out.extend_from_slice(&(m as u32).to_le_bytes());
    }
    for &l in grid.periods() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    for &v in f.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn field_from_bytes(bytes: &[u8]) -> Result<ScalarField, GridError> {
    let take = |off: usize, len: usize| -> Result<&[u8], GridError> {
        bytes
            .get(off..off + len)
            .ok_or_else(|| GridError::BadContainer("truncated header or payload".into()))
    };
    let n = u32::from_le_bytes(take(0, 4)?.try_into().unwrap()) as usize;
    if n > 16 {
        return Err(GridError::BadContainer(format!("implausible dimension {n}")));
    }
    let mut off = 4;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        nodes.push(u32::from_le_bytes(take(off, 4)?.try_into().unwrap()) as usize);
        off += 4;
    }
    let mut periods = Vec::with_capacity(n);
    for _ in 0..n {
        periods.push(f64::from_le_bytes(take(off, 8)?.try_into().unwrap()));
        off += 8;
    }
    let grid: Grid = Arc::new(GridSpec::new(n, nodes, periods)?);
    let count = grid.len();
    let payload = take(off, count * 8)?;
    if bytes.len() != off + count * 8 {
        return Err(GridError::BadContainer(format!(
            "expected {} payload bytes, file has {}",
            count * 8,
            bytes.len() - off
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ScalarField::new(grid, values)
}

pub fn write_field(path: &Path, f: &ScalarField) -> Result<(), GridError> {
    std::fs::write(path, field_to_bytes(f))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<ScalarField, GridError> {
    let bytes = std::fs::read(path)?;
    field_from_bytes(&bytes)
}

/// CSV with columns x1..xn,value. Meant for small grids.
pub fn field_to_csv(f: &ScalarField) -> String {
    let grid = f.grid();
    let n = grid.n();
    let mut out = String::new();
    for a in 0..n {
        out.push_str(&format!("x{}", a + 1));
        out.push(',');
    }
    out.push_str("value\n");
    let mut idx = vec![0usize; n];
    let mut coords = vec![0.0f64; n];
    for (flat, v) in f.values().iter().enumerate() {
        grid.unravel(flat, &mut idx);
        grid.coords_of(&idx, &mut coords);
        for c in &coords {
            out.push_str(&format!("{c},"));
        }
        out.push_str(&format!("{v}\n"));
    }
    out
}
