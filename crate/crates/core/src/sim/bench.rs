//! Per-stage latency on random worlds of growing size.
//!
//! Worlds keep a constant vector density, so the work near the ego stays
//! flat while the world grows. The brute-force baseline scans every static
//! vector for comparison.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{global_to_ego, intersects_range, EgoPose, Point3, Polyline3};
use crate::prior::{rasterize, retrieve_priors, PriorConfig};
use crate::rng::substream;
use crate::tile_store::{GlobalMap, Layer, MapClass, MapVector, RefreshConfig};

/// Vectors per square metre.
pub const DENSITY: f64 = 0.01;
const ORIGIN: (f64, f64) = (500_000.0, 4_000_000.0);

pub fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Side of the square holding `n` vectors at [`DENSITY`].
pub fn world_side(n: usize) -> f64 {
    (n as f64 / DENSITY).sqrt().max(60.0)
}

/// `n` short random polylines in a square at [`DENSITY`], global frame.
pub fn random_world(n: usize, seed: u64) -> Vec<MapVector> {
    let mut rng = substream(seed, 21);
    let side = world_side(n);
    (0..n)
        .map(|k| {
            let mut e = ORIGIN.0 + rng.random::<f64>() * side;
            let mut nn = ORIGIN.1 + rng.random::<f64>() * side;
            let count = rng.random_range(2..=5);
            let mut pts = Vec::with_capacity(count);
            for _ in 0..count {
                pts.push(Point3::new(e, nn, rng.random::<f64>() - 0.5));
                let heading = rng.random::<f64>() * std::f64::consts::TAU;
                let step = 1.0 + rng.random::<f64>() * 4.0;
                e += step * heading.cos();
                nn += step * heading.sin();
            }
            let class = MapClass::ALL[rng.random_range(0..3)];
            let g = Polyline3::new(pts).expect("steps are at least 1 m");
            MapVector::new(k as u64, class, g, 1.0, Layer::StaticMap).expect("valid confidence")
        })
        .collect()
}

pub fn random_poses(n: usize, count: usize, seed: u64) -> Vec<EgoPose> {
    let mut rng = substream(seed, 22);
    let side = world_side(n);
    (0..count)
        .map(|_| EgoPose {
            utm_e: ORIGIN.0 + rng.random::<f64>() * side,
            utm_n: ORIGIN.1 + rng.random::<f64>() * side,
            z: 0.0,
            yaw: rng.random::<f64>() * std::f64::consts::TAU - std::f64::consts::PI,
        })
        .collect()
}

/// Retrieval without tiles: every vector transformed and range-tested.
pub fn brute_force_retrieve(
    vectors: &[MapVector],
    pose: &EgoPose,
    cfg: &PriorConfig,
) -> Vec<MapVector> {
    let mut out: Vec<MapVector> = vectors
        .iter()
        .filter_map(|v| {
            let g = global_to_ego(&v.geometry, pose);
            intersects_range(&g, &cfg.raster.range).then(|| v.with_geometry(g))
        })
        .collect();
    out.sort_by_key(|v| v.id);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub vectors: usize,
    pub frames: usize,
    /// Medians, milliseconds.
    pub retrieval_ms: f64,
    pub rasterization_ms: f64,
    pub refreshment_ms: f64,
    pub brute_force_ms: f64,
}

impl BenchRow {
    pub fn header() -> String {
        format!(
            "{:>8} {:>7} {:>13} {:>16} {:>14} {:>15}",
            "vectors",
            "frames",
            "retrieval_ms",
            "rasterization_ms",
            "refreshment_ms",
            "brute_force_ms"
        )
    }

    pub fn line(&self) -> String {
        format!(
            "{:>8} {:>7} {:>13.4} {:>16.4} {:>14.4} {:>15.4}",
            self.vectors,
            self.frames,
            self.retrieval_ms,
            self.rasterization_ms,
            self.refreshment_ms,
            self.brute_force_ms
        )
    }
}

/// One world of `n` vectors, `frames` random poses. Each frame retrieves
/// both layers, rasterizes them and refreshes with what it saw, so the
/// temporal layer grows as it would on the road.
pub fn bench_world(n: usize, frames: usize, seed: u64, with_brute_force: bool) -> Result<BenchRow> {
    let cfg = PriorConfig::default();
    let vectors = random_world(n, seed);
    let mut map = GlobalMap::for_range(&cfg.raster.range)?;
    map.ingest_static(vectors.iter().cloned());
    let refresh = RefreshConfig::default();
    let (mut ret, mut ras, mut refr, mut brute) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for pose in random_poses(n, frames, seed) {
        let t = Instant::now();
        let temporal = retrieve_priors(&map, Layer::Temporal, &pose, &cfg);
        let static_map = retrieve_priors(&map, Layer::StaticMap, &pose, &cfg);
        ret.push(t.elapsed().as_secs_f64() * 1e3);

        let t = Instant::now();
        let h_t = rasterize(&temporal, &cfg.raster)?;
        let h_m = rasterize(&static_map, &cfg.raster)?;
        ras.push(t.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box((h_t, h_m));

        let preds: Vec<MapVector> = static_map
            .iter()
            .take(30)
            .map(|v| MapVector {
                confidence: 0.9,
                layer: Layer::Temporal,
                ..v.clone()
            })
            .collect();
        let t = Instant::now();
        map.refresh(&preds, &pose, &refresh);
        refr.push(t.elapsed().as_secs_f64() * 1e3);

        if with_brute_force {
            let t = Instant::now();
            std::hint::black_box(brute_force_retrieve(&vectors, &pose, &cfg));
            brute.push(t.elapsed().as_secs_f64() * 1e3);
        }
    }
    Ok(BenchRow {
        vectors: n,
        frames,
        retrieval_ms: median(&mut ret),
        rasterization_ms: median(&mut ras),
        refreshment_ms: median(&mut refr),
        brute_force_ms: median(&mut brute),
    })
}

pub fn bench(sizes: &[usize], frames: usize, seed: u64) -> Result<Vec<BenchRow>> {
    sizes
        .iter()
        .map(|&n| bench_world(n, frames, seed, true))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tile_store::RetrievalOptions;

    #[test]
    fn median_cases() {
        assert_eq!(median(&mut []), 0.0);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn tiled_matches_brute_force_in_strict_mode() {
        let vectors = random_world(2_000, 3);
        let mut cfg = PriorConfig {
            vertical_band: None,
            ..PriorConfig::default()
        };
        cfg.retrieval = RetrievalOptions { strict_3x3: true };
        let mut map = GlobalMap::for_range(&cfg.raster.range).unwrap();
        map.ingest_static(vectors.iter().cloned());
        for pose in random_poses(2_000, 50, 3) {
            assert_eq!(
                retrieve_priors(&map, Layer::StaticMap, &pose, &cfg),
                brute_force_retrieve(&vectors, &pose, &cfg)
            );
        }
    }

    #[test]
    fn empty_world_runs() {
        let row = bench_world(0, 5, 1, true).unwrap();
        assert_eq!(row.vectors, 0);
        assert!(row.retrieval_ms >= 0.0);
    }
}
