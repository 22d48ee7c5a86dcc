//! Before/after BEV plots of vector sets as PNG.
//!
//! Each panel shows one vector set in a shared window: forward is up and
//! left is left, as in the heatmaps. Dividers are orange, crossings blue and
//! boundaries green.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tile_store::{MapClass, MapVector};

const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const FRAME: Rgb<u8> = Rgb([200, 200, 200]);
const EGO: Rgb<u8> = Rgb([0, 0, 0]);

fn colour(class: MapClass) -> Rgb<u8> {
    match class {
        MapClass::Divider => Rgb([230, 120, 0]),
        MapClass::PedCrossing => Rgb([30, 90, 220]),
        MapClass::Boundary => Rgb([20, 150, 60]),
    }
}

/// Ego-frame window `[x_min, x_max] x [y_min, y_max]` in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Window {
    /// Tight box around every vertex with a 2 m margin.
    pub fn fit<'a>(sets: impl IntoIterator<Item = &'a [MapVector]>) -> Option<Self> {
        let mut w: Option<Window> = None;
        for v in sets.into_iter().flatten() {
            let (e0, n0, e1, n1) = v.geometry.bounds();
            w = Some(match w {
                None => Window {
                    x_min: e0,
                    x_max: e1,
                    y_min: n0,
                    y_max: n1,
                },
                Some(w) => Window {
                    x_min: w.x_min.min(e0),
                    x_max: w.x_max.max(e1),
                    y_min: w.y_min.min(n0),
                    y_max: w.y_max.max(n1),
                },
            });
        }
        w.map(|w| Window {
            x_min: w.x_min - 2.0,
            x_max: w.x_max + 2.0,
            y_min: w.y_min - 2.0,
            y_max: w.y_max + 2.0,
        })
    }
}

/// Panels side by side, `px_per_m` pixels per metre, 4 px gutter.
pub fn render_panels(panels: &[&[MapVector]], window: Window, px_per_m: f64) -> RgbImage {
    let w = (((window.y_max - window.y_min) * px_per_m).ceil() as u32).max(1);
    let h = (((window.x_max - window.x_min) * px_per_m).ceil() as u32).max(1);
    let gutter = 4;
    let total_w = w * panels.len() as u32 + gutter * panels.len().saturating_sub(1) as u32;
    let mut img = RgbImage::from_pixel(total_w.max(1), h, BACKGROUND);
    for (k, vectors) in panels.iter().enumerate() {
        let x0 = k as u32 * (w + gutter);
        for y in 0..h {
            for dx in 0..gutter.min(total_w.saturating_sub(x0 + w)) {
                img.put_pixel(x0 + w + dx, y, FRAME);
            }
        }
        let to_px = |x: f64, y: f64| ((window.y_max - y) * px_per_m, (window.x_max - x) * px_per_m);
        let mut plot = |c: f64, r: f64, col: Rgb<u8>| {
            if c >= 0.0 && r >= 0.0 && (c as u32) < w && (r as u32) < h {
                img.put_pixel(x0 + c as u32, r as u32, col);
            }
        };
        for v in vectors.iter() {
            let col = colour(v.class);
            for (a, b) in v.geometry.segments() {
                let (ca, ra) = to_px(a.e, a.n);
                let (cb, rb) = to_px(b.e, b.n);
                let steps = ((cb - ca).abs().max((rb - ra).abs()) * 2.0).ceil().max(1.0) as usize;
                for s in 0..=steps {
                    let t = s as f64 / steps as f64;
                    plot(ca + t * (cb - ca), ra + t * (rb - ra), col);
                }
            }
        }
        let (ce, re) = to_px(0.0, 0.0);
        for d in -2i32..=2 {
            plot(ce + d as f64, re, EGO);
            plot(ce, re + d as f64, EGO);
        }
    }
    img
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::config(format!("png encoding failed: {e}")))?;
    Ok(buf.into_inner())
}

/// Writes a two-panel before/after PNG.
pub fn write_before_after(
    path: impl AsRef<Path>,
    before: &[MapVector],
    after: &[MapVector],
    window: Window,
    px_per_m: f64,
) -> Result<()> {
    let img = render_panels(&[before, after], window, px_per_m);
    std::fs::write(path, encode_png(&img)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point3, Polyline3};
    use crate::tile_store::Layer;

    fn divider() -> MapVector {
        let g = Polyline3::new(vec![
            Point3::new(-10.0, 0.0, 0.0),
            Point3::new(10.0, 0.0, 0.0),
        ])
        .unwrap();
        MapVector::new(1, MapClass::Divider, g, 1.0, Layer::StaticMap).unwrap()
    }

    #[test]
    fn panels_are_side_by_side() {
        let v = [divider()];
        let win = Window::fit([&v[..]]).unwrap();
        assert_eq!(win.x_min, -12.0);
        let img = render_panels(&[&v, &[]], win, 2.0);
        assert_eq!(img.height(), 48);
        assert_eq!(img.width(), 2 * 8 + 4);
        // the divider runs along the centre column of the first panel only
        let orange = colour(MapClass::Divider);
        assert_eq!(*img.get_pixel(4, 10), orange);
        assert_ne!(*img.get_pixel(12 + 4, 10), orange);
    }

    #[test]
    fn png_is_deterministic() {
        let v = [divider()];
        let win = Window::fit([&v[..]]).unwrap();
        let a = encode_png(&render_panels(&[&v, &v], win, 4.0)).unwrap();
        let b = encode_png(&render_panels(&[&v, &v], win, 4.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a[1..4], b"PNG");
    }
}
