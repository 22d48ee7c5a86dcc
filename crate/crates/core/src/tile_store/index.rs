//! Tile indexing of UTM coordinates and the adjacency rule used at retrieval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TileIndex {
    pub i: i64,
    pub j: i64,
}

impl TileIndex {
    pub const fn new(i: i64, j: i64) -> Self {
        Self { i, j }
    }
}

pub(crate) fn check_tile_side(l: f64) -> Result<()> {
    if l.is_finite() && l > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "tile side must be a positive length, got {l}"
        )))
    }
}

/// Floor division, so tiles at negative coordinates have the same width as
/// every other tile.
pub(crate) fn axis_index(coord: f64, l: f64) -> i64 {
    (coord / l).floor() as i64
}

pub fn tile_index(utm_e: f64, utm_n: f64, l: f64) -> Result<TileIndex> {
    check_tile_side(l)?;
    Ok(TileIndex::new(axis_index(utm_e, l), axis_index(utm_n, l)))
}

/// Offsets along one axis: the neighbour on the side of the tile the
/// coordinate sits in, or none when it sits exactly on the midline.
fn axis_neighbours(coord: f64, l: f64) -> (i64, &'static [i64]) {
    let idx = axis_index(coord, l);
    // remainder consistent with `axis_index`, not `%`
    let rem = coord - idx as f64 * l;
    let half = l / 2.0;
    let offsets: &'static [i64] = if rem < half {
        &[-1, 0]
    } else if rem > half {
        &[0, 1]
    } else {
        &[0]
    };
    (idx, offsets)
}

/// Target tile plus the neighbours on the near side of each axis. The result
/// holds 1, 2 or 4 tiles, sorted.
pub fn adjacent_tiles(utm_e: f64, utm_n: f64, l: f64) -> Result<Vec<TileIndex>> {
    check_tile_side(l)?;
    let (i, di) = axis_neighbours(utm_e, l);
    let (j, dj) = axis_neighbours(utm_n, l);
    let mut out = Vec::with_capacity(di.len() * dj.len());
    for a in di {
        for b in dj {
            out.push(TileIndex::new(i + a, j + b));
        }
    }
    out.sort();
    Ok(out)
}

/// The full 3x3 block around the target tile.
pub fn neighbourhood_3x3(utm_e: f64, utm_n: f64, l: f64) -> Result<Vec<TileIndex>> {
    let t = tile_index(utm_e, utm_n, l)?;
    let mut out = Vec::with_capacity(9);
    for a in -1..=1 {
        for b in -1..=1 {
            out.push(TileIndex::new(t.i + a, t.j + b));
        }
    }
    Ok(out)
}
