//! Heatmap files.
//!
//! * Portable graymap (`P5`), one file per class channel, cells 0 or 255.
//! * Raw float container: a 16-byte header followed by `classes * rows * cols`
//!   little-endian `f32` values in class-major, row-major order.
//!
//! ```text
//! offset 0   4 bytes  magic "UPHM"
//! offset 4   u32      classes
//! offset 8   u32      rows
//! offset 12  u32      cols
//! offset 16  f32 x classes*rows*cols
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::Heatmap;
use crate::error::{Error, Result};
use crate::tile_store::MapClass;

pub const RAW_MAGIC: [u8; 4] = *b"UPHM";
pub const RAW_HEADER_LEN: usize = 16;

pub fn encode_pgm(grid: &Heatmap, class: usize) -> Vec<u8> {
    let (_, rows, cols) = grid.shape();
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(
        grid.channel(class)
            .iter()
            .map(|&b| if b != 0 { 255u8 } else { 0 }),
    );
    out
}

pub fn encode_raw(grid: &Heatmap) -> Vec<u8> {
    let (classes, rows, cols) = grid.shape();
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + 4 * grid.as_slice().len());
    out.extend_from_slice(&RAW_MAGIC);
    for dim in [classes, rows, cols] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for &b in grid.as_slice() {
        out.extend_from_slice(&(b as f32).to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8]) -> Result<Heatmap> {
    let fail = |offset: usize, reason: String| Error::Decode {
        offset: offset as u64,
        reason,
    };
    if bytes.len() < RAW_HEADER_LEN {
        return Err(fail(bytes.len(), "truncated heatmap header".into()));
    }
    if bytes[..4] != RAW_MAGIC {
        return Err(fail(0, "bad magic, expected UPHM".into()));
    }
    let dim =
        |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (classes, rows, cols) = (dim(4), dim(8), dim(12));
    let cells = classes
        .checked_mul(rows)
        .and_then(|n| n.checked_mul(cols))
        .ok_or_else(|| fail(4, "heatmap dimensions overflow".into()))?;
    let body = &bytes[RAW_HEADER_LEN..];
    if body.len() != cells * 4 {
        return Err(fail(
            RAW_HEADER_LEN + body.len().min(cells * 4),
            format!("expected {} data bytes, found {}", cells * 4, body.len()),
        ));
    }
    let mut data = Vec::with_capacity(cells);
    for (k, chunk) in body.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        match v {
            0.0 => data.push(0),
            1.0 => data.push(1),
            other => {
                return Err(fail(
                    RAW_HEADER_LEN + 4 * k,
                    format!("non-binary cell value {other}"),
                ))
            }
        }
    }
    Ok(Heatmap::from_raw(classes, rows, cols, data))
}

/// Writes `<stem>.uphm` plus `<stem>_<class>.pgm` per channel into `dir`.
/// Returns the paths written.
pub fn write_heatmap(dir: impl AsRef<Path>, stem: &str, grid: &Heatmap) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let raw = dir.join(format!("{stem}.uphm"));
    fs::File::create(&raw)?.write_all(&encode_raw(grid))?;
    written.push(raw);
    let (classes, _, _) = grid.shape();
    for class in 0..classes {
        let name = MapClass::from_index(class)
            .map_or_else(|| format!("class{class}"), |c| c.name().to_string());
        let pgm = dir.join(format!("{stem}_{name}.pgm"));
        fs::write(&pgm, encode_pgm(grid, class))?;
        written.push(pgm);
    }
    Ok(written)
}
