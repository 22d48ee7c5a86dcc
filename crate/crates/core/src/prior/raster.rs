//! Conservative BEV rasterization of ego-frame polylines.
//!
//! Grid layout: row 0 is the front-most strip (`x = front`), rows grow
//! towards the rear; column 0 is the left-most strip (`y = left`), columns
//! grow to the right. In continuous cell coordinates
//!
//! ```text
//! u = (front - x) / cell      v = (left - y) / cell
//! ```
//!
//! cell `(r, c)` covers the half-open square `[r, r+1) x [c, c+1)`, so every
//! point of the plane belongs to exactly one cell and the ego origin falls in
//! cell `(rows / 2, cols / 2)`. A segment sets every cell whose half-open
//! square it meets; cells outside the grid are dropped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PerceptionRange, Point3};
use crate::tile_store::{MapClass, MapVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterConfig {
    /// Cell side, metres.
    pub cell: f64,
    pub range: PerceptionRange,
    pub classes: usize,
    /// Extra cells painted on each side of a stroke (0 = one-cell strokes).
    pub line_halfwidth: usize,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            cell: 0.3,
            range: PerceptionRange::default(),
            classes: MapClass::ALL.len(),
            line_halfwidth: 0,
        }
    }
}

fn whole_cells(extent: f64, cell: f64, what: &str) -> Result<usize> {
    let q = extent / cell;
    let rounded = q.round();
    if rounded < 1.0 || (q - rounded).abs() > 1e-6 * rounded.max(1.0) {
        return Err(Error::config(format!(
            "{what} extent {extent} m is not a whole number of {cell} m cells"
        )));
    }
    Ok(rounded as usize)
}

impl RasterConfig {
    /// `(rows, cols)`; errors unless both range extents are whole multiples of the cell.
    pub fn dims(&self) -> Result<(usize, usize)> {
        if !(self.cell.is_finite() && self.cell > 0.0) {
            return Err(Error::config(format!(
                "cell size must be positive, got {}",
                self.cell
            )));
        }
        if self.classes == 0 {
            return Err(Error::config("raster needs at least one class channel"));
        }
        self.range.validate()?;
        Ok((
            whole_cells(self.range.long_side(), self.cell, "longitudinal")?,
            whole_cells(self.range.short_side(), self.cell, "lateral")?,
        ))
    }

    pub fn validate(&self) -> Result<()> {
        self.dims().map(|_| ())
    }

    /// Continuous cell coordinates `(u, v)` of an ego-frame point.
    pub fn cell_coords(&self, p: &Point3) -> (f64, f64) {
        (
            (self.range.front - p.e) / self.cell,
            (self.range.left - p.n) / self.cell,
        )
    }
}

/// Binary per-class occupancy grid, stored class-major then row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heatmap {
    classes: usize,
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl Heatmap {
    pub fn zeros(classes: usize, rows: usize, cols: usize) -> Self {
        Self {
            classes,
            rows,
            cols,
            data: vec![0; classes * rows * cols],
        }
    }

    pub fn for_config(cfg: &RasterConfig) -> Result<Self> {
        let (rows, cols) = cfg.dims()?;
        Ok(Self::zeros(cfg.classes, rows, cols))
    }

    /// `(classes, rows, cols)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.classes, self.rows, self.cols)
    }

    pub fn get(&self, class: usize, row: usize, col: usize) -> bool {
        self.data[(class * self.rows + row) * self.cols + col] != 0
    }

    pub fn set(&mut self, class: usize, row: usize, col: usize) {
        self.data[(class * self.rows + row) * self.cols + col] = 1;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn channel(&self, class: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.data[class * n..(class + 1) * n]
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b != 0).count()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&b| b == 0)
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&b| b as f32).collect()
    }

    pub(crate) fn from_raw(classes: usize, rows: usize, cols: usize, data: Vec<u8>) -> Self {
        debug_assert_eq!(data.len(), classes * rows * cols);
        Self {
            classes,
            rows,
            cols,
            data,
        }
    }

    /// Paints one ego-frame polyline into `class`. A single point paints the
    /// cell containing it.
    pub fn draw_polyline(&mut self, class: usize, points: &[Point3], cfg: &RasterConfig) {
        assert!(class < self.classes, "class channel {class} out of range");
        let mut hits = Vec::new();
        match points {
            [] => {}
            [only] => {
                let uv = cfg.cell_coords(only);
                segment_cells(uv, uv, self.rows, self.cols, &mut hits);
            }
            _ => {
                for w in points.windows(2) {
                    segment_cells(
                        cfg.cell_coords(&w[0]),
                        cfg.cell_coords(&w[1]),
                        self.rows,
                        self.cols,
                        &mut hits,
                    );
                }
            }
        }
        let h = cfg.line_halfwidth as isize;
        for (r, c) in hits {
            if h == 0 {
                self.set(class, r, c);
                continue;
            }
            for dr in -h..=h {
                for dc in -h..=h {
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if rr >= 0 && cc >= 0 && (rr as usize) < self.rows && (cc as usize) < self.cols
                    {
                        self.set(class, rr as usize, cc as usize);
                    }
                }
            }
        }
    }
}

/// Rasterizes ego-frame vectors into one channel per class.
pub fn rasterize(vectors: &[MapVector], cfg: &RasterConfig) -> Result<Heatmap> {
    let mut grid = Heatmap::for_config(cfg)?;
    for v in vectors {
        let class = v.class.index();
        if class < grid.classes {
            grid.draw_polyline(class, v.geometry.points(), cfg);
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy)]
struct Span {
    lo: f64,
    lo_open: bool,
    hi: f64,
    hi_open: bool,
}

impl Span {
    const UNIT: Span = Span {
        lo: 0.0,
        lo_open: false,
        hi: 1.0,
        hi_open: false,
    };

    fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && (self.lo_open || self.hi_open))
    }

    fn intersect(self, other: Span) -> Span {
        let (lo, lo_open) = if self.lo > other.lo {
            (self.lo, self.lo_open)
        } else if other.lo > self.lo {
            (other.lo, other.lo_open)
        } else {
            (self.lo, self.lo_open || other.lo_open)
        };
        let (hi, hi_open) = if self.hi < other.hi {
            (self.hi, self.hi_open)
        } else if other.hi < self.hi {
            (other.hi, other.hi_open)
        } else {
            (self.hi, self.hi_open || other.hi_open)
        };
        Span {
            lo,
            lo_open,
            hi,
            hi_open,
        }
    }
}

/// Parameters `t` in `[0, 1]` where `start + t * delta` lies in `[lo, lo + 1)`.
fn band_span(start: f64, delta: f64, lo: f64) -> Span {
    let hi = lo + 1.0;
    let band = if delta == 0.0 {
        if start >= lo && start < hi {
            Span::UNIT
        } else {
            Span {
                lo: 1.0,
                lo_open: true,
                hi: 0.0,
                hi_open: true,
            }
        }
    } else if delta > 0.0 {
        Span {
            lo: (lo - start) / delta,
            lo_open: false,
            hi: (hi - start) / delta,
            hi_open: true,
        }
    } else {
        Span {
            lo: (hi - start) / delta,
            lo_open: true,
            hi: (lo - start) / delta,
            hi_open: false,
        }
    };
    band.intersect(Span::UNIT)
}

/// Whether the segment `a -> b` (cell coordinates) meets the half-open cell `(r, c)`.
pub fn segment_hits_cell(a: (f64, f64), b: (f64, f64), row: usize, col: usize) -> bool {
    let rows = band_span(a.0, b.0 - a.0, row as f64);
    if rows.is_empty() {
        return false;
    }
    !rows
        .intersect(band_span(a.1, b.1 - a.1, col as f64))
        .is_empty()
}

/// Cells met by one segment: walk the rows it spans, bound the column range
/// inside each row, then confirm each candidate exactly.
fn segment_cells(
    a: (f64, f64),
    b: (f64, f64),
    rows: usize,
    cols: usize,
    out: &mut Vec<(usize, usize)>,
) {
    let (du, dv) = (b.0 - a.0, b.1 - a.1);
    let r_lo = a.0.min(b.0).floor().max(0.0);
    let r_hi = a.0.max(b.0).floor().min(rows as f64 - 1.0);
    if r_lo > r_hi || !r_lo.is_finite() || !r_hi.is_finite() {
        return;
    }
    for r in r_lo as usize..=r_hi as usize {
        let span = band_span(a.0, du, r as f64);
        if span.is_empty() {
            continue;
        }
        let v_at_lo = a.1 + span.lo * dv;
        let v_at_hi = a.1 + span.hi * dv;
        let c_lo = (v_at_lo.min(v_at_hi).floor() - 1.0).max(0.0);
        let c_hi = (v_at_lo.max(v_at_hi).floor() + 1.0).min(cols as f64 - 1.0);
        if c_lo > c_hi {
            continue;
        }
        for c in c_lo as usize..=c_hi as usize {
            if segment_hits_cell(a, b, r, c) {
                out.push((r, c));
            }
        }
    }
}
