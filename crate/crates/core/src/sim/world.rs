//! Synthetic grid towns.
//!
//! Roads run on a square lattice with pitch `block_size + 2 * lane_width`.
//! Road centre lines sit at multiples of the pitch (before the UTM offset),
//! so block `(a, b)` fills the square between roads `a, a+1` and `b, b+1`.
//!
//! * boundaries: one closed loop per block plus one around the whole town
//! * dividers: the centre line of every road segment between intersections
//! * crossings: closed rectangles strictly inside a road segment, spanning it

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, EgoPose, Point3, Polyline3};
use crate::rng::substream;
use crate::tile_store::{Layer, MapClass, MapVector};

const ROUTE_STREAM: u64 = 1;
const CROSSING_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSpec {
    pub seed: u64,
    /// Blocks per side.
    pub blocks: usize,
    pub block_size: f64,
    pub lane_width: f64,
    /// Probability that a road segment carries a crossing at each end.
    pub crossing_density: f64,
    /// Peak height of the terrain, metres.
    pub z_amplitude: f64,
    pub z_wavelength: f64,
    /// Added to every east/north coordinate.
    pub utm_origin: (f64, f64),
    /// Length of the ego route, metres.
    pub route_length: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            blocks: 4,
            block_size: 80.0,
            lane_width: 3.5,
            crossing_density: 0.5,
            z_amplitude: 1.5,
            z_wavelength: 400.0,
            utm_origin: (500_000.0, 4_000_000.0),
            route_length: 1_200.0,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("block_size", self.block_size),
            ("lane_width", self.lane_width),
            ("z_wavelength", self.z_wavelength),
            ("route_length", self.route_length),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.blocks == 0 {
            return Err(Error::config("blocks must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.crossing_density) {
            return Err(Error::config(format!(
                "crossing_density must be in [0, 1], got {}",
                self.crossing_density
            )));
        }
        if !(self.z_amplitude.is_finite() && self.z_amplitude >= 0.0) {
            return Err(Error::config(format!(
                "z_amplitude must be >= 0, got {}",
                self.z_amplitude
            )));
        }
        if !(self.utm_origin.0.is_finite() && self.utm_origin.1.is_finite()) {
            return Err(Error::config("utm_origin must be finite"));
        }
        // crossings are 3 m deep with 1 m clearance each side
        if self.block_size < 8.0 {
            return Err(Error::config(format!(
                "block_size must be at least 8 m, got {}",
                self.block_size
            )));
        }
        Ok(())
    }

    pub fn road_width(&self) -> f64 {
        2.0 * self.lane_width
    }

    pub fn pitch(&self) -> f64 {
        self.block_size + self.road_width()
    }

    pub fn height_at(&self, e: f64, n: f64) -> f64 {
        let (e0, n0) = self.utm_origin;
        let k = TAU / self.z_wavelength;
        0.5 * self.z_amplitude * ((k * (e - e0)).sin() + (k * (n - n0)).sin())
    }

    fn point(&self, x: f64, y: f64) -> Point3 {
        let e = x + self.utm_origin.0;
        let n = y + self.utm_origin.1;
        Point3::new(e, n, self.height_at(e, n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Runs along east.
    East,
    /// Runs along north.
    North,
}

/// Stretch of road between two intersections, global frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadSegment {
    pub axis: Axis,
    /// Centre line coordinate across the road.
    pub centre: f64,
    /// Extent along the road.
    pub from: f64,
    pub to: f64,
    pub half_width: f64,
}

impl RoadSegment {
    /// Strict interior test.
    pub fn interior_contains(&self, e: f64, n: f64) -> bool {
        let (along, across) = match self.axis {
            Axis::East => (e, n),
            Axis::North => (n, e),
        };
        along > self.from && along < self.to && (across - self.centre).abs() < self.half_width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub spec: WorldSpec,
    /// Ground truth, global frame, ids from 1.
    pub vectors: Vec<MapVector>,
    pub roads: Vec<RoadSegment>,
    /// Centre of the driven lane, densified, global frame.
    pub route: Vec<Point3>,
}

impl World {
    pub fn of_class(&self, class: MapClass) -> impl Iterator<Item = &MapVector> {
        self.vectors.iter().filter(move |v| v.class == class)
    }

    pub fn route_length(&self) -> f64 {
        self.route
            .windows(2)
            .map(|w| w[0].planar_distance(&w[1]))
            .sum()
    }

    /// Poses every `step` metres along the route. The ego stops at the route
    /// end if `frames * step` exceeds it.
    pub fn trajectory(&self, step: f64, frames: usize) -> Vec<EgoPose> {
        let mut out = Vec::with_capacity(frames);
        let mut seg = 0usize;
        let mut seg_start = 0.0;
        for k in 0..frames {
            let s = k as f64 * step;
            while seg + 1 < self.route.len() - 1
                && seg_start + self.route[seg].planar_distance(&self.route[seg + 1]) < s
            {
                seg_start += self.route[seg].planar_distance(&self.route[seg + 1]);
                seg += 1;
            }
            let (a, b) = (self.route[seg], self.route[seg + 1]);
            let len = a.planar_distance(&b);
            let t = ((s - seg_start) / len).clamp(0.0, 1.0);
            let e = a.e + t * (b.e - a.e);
            let n = a.n + t * (b.n - a.n);
            let yaw = wrap_angle((b.n - a.n).atan2(b.e - a.e));
            out.push(EgoPose {
                utm_e: e,
                utm_n: n,
                z: self.spec.height_at(e, n),
                yaw,
            });
        }
        out
    }
}

fn closed_rect(spec: &WorldSpec, x0: f64, y0: f64, x1: f64, y1: f64) -> Polyline3 {
    let pts = [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)];
    Polyline3::from_points_unchecked(pts.iter().map(|&(x, y)| spec.point(x, y)).collect())
}

/// Straight line sampled every `step` metres so terrain height follows it.
fn draped_line(spec: &WorldSpec, from: (f64, f64), to: (f64, f64), step: f64) -> Polyline3 {
    let len = (to.0 - from.0).hypot(to.1 - from.1);
    let n = ((len / step).ceil() as usize).max(1);
    let pts = (0..=n)
        .map(|k| {
            let t = k as f64 / n as f64;
            spec.point(from.0 + t * (to.0 - from.0), from.1 + t * (to.1 - from.1))
        })
        .collect();
    Polyline3::from_points_unchecked(pts)
}

pub fn generate_world(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let p = spec.pitch();
    let hw = spec.road_width() / 2.0;
    let nb = spec.blocks;
    let mut geoms: Vec<(MapClass, Polyline3)> = Vec::new();

    for a in 0..nb {
        for b in 0..nb {
            let (x0, y0) = (a as f64 * p + hw, b as f64 * p + hw);
            geoms.push((
                MapClass::Boundary,
                closed_rect(spec, x0, y0, x0 + spec.block_size, y0 + spec.block_size),
            ));
        }
    }
    let outer = nb as f64 * p + hw;
    geoms.push((
        MapClass::Boundary,
        closed_rect(spec, -hw, -hw, outer, outer),
    ));

    let mut roads = Vec::new();
    for axis in [Axis::East, Axis::North] {
        for k in 0..=nb {
            for seg in 0..nb {
                roads.push(RoadSegment {
                    axis,
                    centre: k as f64 * p,
                    from: seg as f64 * p + hw,
                    to: (seg + 1) as f64 * p - hw,
                    half_width: hw,
                });
            }
        }
    }

    let mut rng = substream(spec.seed, CROSSING_STREAM);
    let depth = 3.0;
    let inset = hw - 0.5;
    for r in &roads {
        let (s0, s1) = (r.from, r.to);
        let along = |s: f64, t: f64| match r.axis {
            Axis::East => (s, r.centre + t),
            Axis::North => (r.centre + t, s),
        };
        geoms.push((
            MapClass::Divider,
            draped_line(spec, along(s0, 0.0), along(s1, 0.0), 10.0),
        ));
        for start in [s0 + 1.0, s1 - 1.0 - depth] {
            if rng.random_bool(spec.crossing_density) {
                let (xa, ya) = along(start, -inset);
                let (xb, yb) = along(start + depth, inset);
                geoms.push((
                    MapClass::PedCrossing,
                    closed_rect(spec, xa.min(xb), ya.min(yb), xa.max(xb), ya.max(yb)),
                ));
            }
        }
    }

    let vectors = geoms
        .into_iter()
        .enumerate()
        .map(|(k, (class, g))| MapVector::new(k as u64 + 1, class, g, 1.0, Layer::StaticMap))
        .collect::<Result<Vec<_>>>()?;
    let (e0, n0) = spec.utm_origin;
    let roads = roads
        .into_iter()
        .map(|r| {
            let (c_off, s_off) = match r.axis {
                Axis::East => (n0, e0),
                Axis::North => (e0, n0),
            };
            RoadSegment {
                centre: r.centre + c_off,
                from: r.from + s_off,
                to: r.to + s_off,
                ..r
            }
        })
        .collect();
    let route = route(spec);
    Ok(World {
        spec: spec.clone(),
        vectors,
        roads,
        route,
    })
}

const DIRS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

/// Random walk over intersections without U-turns, driven in the right lane,
/// corners rounded with quadratic Bezier arcs.
fn route(spec: &WorldSpec) -> Vec<Point3> {
    let mut rng = substream(spec.seed, ROUTE_STREAM);
    let nb = spec.blocks as i64;
    let p = spec.pitch();
    let off = spec.lane_width / 2.0;
    let legs = (spec.route_length / p).ceil() as usize + 1;

    let mut node = (0i64, 0i64);
    let mut dir = 0usize;
    let mut nodes = vec![node];
    let mut dirs = Vec::with_capacity(legs);
    for step in 0..legs {
        let options: Vec<usize> = (0..4)
            .filter(|&d| step == 0 || d != (dir + 2) % 4)
            .filter(|&d| {
                let (x, y) = (node.0 + DIRS[d].0, node.1 + DIRS[d].1);
                (0..=nb).contains(&x) && (0..=nb).contains(&y)
            })
            .collect();
        dir = options[rng.random_range(0..options.len())];
        node = (node.0 + DIRS[dir].0, node.1 + DIRS[dir].1);
        nodes.push(node);
        dirs.push(dir);
    }

    // right of heading (dx, dy) is (dy, -dx)
    let right = |d: usize| (DIRS[d].1 as f64 * off, -DIRS[d].0 as f64 * off);
    let at = |n: (i64, i64)| (n.0 as f64 * p, n.1 as f64 * p);
    let mut corners: Vec<(f64, f64)> = Vec::new();
    let (sx, sy) = at(nodes[0]);
    let r0 = right(dirs[0]);
    corners.push((sx + r0.0, sy + r0.1));
    for k in 1..dirs.len() {
        if dirs[k] == dirs[k - 1] {
            continue;
        }
        let (x, y) = at(nodes[k]);
        let (ra, rb) = (right(dirs[k - 1]), right(dirs[k]));
        corners.push((x + ra.0 + rb.0, y + ra.1 + rb.1));
    }
    let (ex, ey) = at(*nodes.last().expect("route has nodes"));
    let rl = right(*dirs.last().expect("route has legs"));
    corners.push((ex + rl.0, ey + rl.1));

    let radius = (spec.lane_width * 2.0).min(spec.block_size / 2.0);
    let mut pts: Vec<(f64, f64)> = vec![corners[0]];
    for k in 1..corners.len() - 1 {
        let (a, c, b) = (corners[k - 1], corners[k], corners[k + 1]);
        let unit = |from: (f64, f64), to: (f64, f64)| {
            let (dx, dy) = (to.0 - from.0, to.1 - from.1);
            let l = dx.hypot(dy);
            (dx / l, dy / l)
        };
        let (ui, uo) = (unit(a, c), unit(c, b));
        let p0 = (c.0 - radius * ui.0, c.1 - radius * ui.1);
        let p2 = (c.0 + radius * uo.0, c.1 + radius * uo.1);
        for s in 0..=8 {
            let t = s as f64 / 8.0;
            let w = ((1.0 - t) * (1.0 - t), 2.0 * t * (1.0 - t), t * t);
            pts.push((
                w.0 * p0.0 + w.1 * c.0 + w.2 * p2.0,
                w.0 * p0.1 + w.1 * c.1 + w.2 * p2.1,
            ));
        }
    }
    pts.push(*corners.last().expect("route has corners"));
    pts.dedup_by(|a, b| (a.0 - b.0).hypot(a.1 - b.1) < 1e-9);
    pts.into_iter().map(|(x, y)| spec.point(x, y)).collect()
}
