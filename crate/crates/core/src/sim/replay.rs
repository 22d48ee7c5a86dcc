//! Stand-in detector and the frame loop.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::world::World;
use crate::error::{Error, Result};
use crate::eval::{evaluate_frames, APReport, EvalConfig, EvalFrame};
use crate::geometry::{EgoPose, Point3, Polyline3};
use crate::perturbation::{apply, ElementPool, PerturbationOp, PerturbationSpec};
use crate::prior::{
    rasterize, retrieve_priors, sample_mode, select_inference_mode, Mode, ModeRatio, PriorConfig,
    PriorHeatmaps,
};
use crate::rng::substream;
use crate::tile_store::{GlobalMap, Layer, MapVector, RefreshConfig, RetrievalOptions, TileIndex};

const DETECTOR_STREAM: u64 = 11;
const MODE_STREAM: u64 = 12;
const PERTURB_STREAM: u64 = 13;
const COVERAGE_STREAM: u64 = 14;

/// Which tiles of the static layer survive ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coverage {
    /// Each tile kept independently with this probability (hashed, so the
    /// decision for a tile does not depend on iteration order).
    Fraction(f64),
    /// Exactly these tiles.
    Tiles(BTreeSet<TileIndex>),
}

impl Coverage {
    pub fn covers(&self, seed: u64, tile: &TileIndex) -> bool {
        match self {
            Coverage::Fraction(f) if *f >= 1.0 => true,
            Coverage::Fraction(f) if *f <= 0.0 => false,
            Coverage::Fraction(f) => {
                let label = (tile.i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (tile.j as u64);
                substream(seed ^ COVERAGE_STREAM, label).random::<f64>() < *f
            }
            Coverage::Tiles(set) => set.contains(tile),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplaySpec {
    pub seed: u64,
    /// Per-axis in-plane vertex jitter, metres.
    pub detector_noise_sigma: f64,
    pub detector_dropout: f64,
    /// Confidence is `exp(-mean_jitter / sigma_ref)`.
    pub sigma_ref: f64,
    pub frame_rate: f64,
    /// Ego speed, m/s.
    pub speed: f64,
    pub frames: usize,
    pub map_coverage: Coverage,
}

impl Default for ReplaySpec {
    fn default() -> Self {
        Self {
            seed: 0,
            detector_noise_sigma: 0.1,
            detector_dropout: 0.1,
            sigma_ref: 1.0,
            frame_rate: 10.0,
            speed: 10.0,
            frames: 100,
            map_coverage: Coverage::Fraction(1.0),
        }
    }
}

impl ReplaySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.detector_noise_sigma.is_finite() && self.detector_noise_sigma >= 0.0) {
            return Err(Error::config("detector_noise_sigma must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.detector_dropout) {
            return Err(Error::config("detector_dropout must be in [0, 1]"));
        }
        for (name, v) in [
            ("sigma_ref", self.sigma_ref),
            ("frame_rate", self.frame_rate),
            ("speed", self.speed),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if let Coverage::Fraction(f) = self.map_coverage {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::config(format!(
                    "map_coverage must be in [0, 1], got {f}"
                )));
            }
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.speed / self.frame_rate
    }
}

/// Jitters, drops and scores ground truth. Vertices move in-plane only.
pub fn replay_predict<R: Rng + ?Sized>(
    gt: &[MapVector],
    spec: &ReplaySpec,
    rng: &mut R,
) -> Vec<MapVector> {
    let normal = Normal::new(0.0, spec.detector_noise_sigma).expect("sigma validated");
    let mut out = Vec::with_capacity(gt.len());
    for v in gt {
        if rng.random_bool(spec.detector_dropout) {
            continue;
        }
        let mut total = 0.0;
        let pts: Vec<Point3> = v
            .geometry
            .points()
            .iter()
            .map(|p| {
                let (de, dn) = (normal.sample(rng), normal.sample(rng));
                total += de.hypot(dn);
                Point3::new(p.e + de, p.n + dn, p.z)
            })
            .collect();
        let mean_jitter = total / pts.len() as f64;
        let geometry = Polyline3::new(pts).unwrap_or_else(|_| v.geometry.clone());
        let mut pred = v.with_geometry(geometry);
        pred.confidence = (-mean_jitter / spec.sigma_ref).exp();
        pred.layer = Layer::Temporal;
        out.push(pred);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModePolicy {
    /// Availability switching used at inference.
    Switching,
    Fixed {
        mode: Mode,
    },
    /// Training-style draw per frame.
    Sampled {
        ratio: ModeRatio,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    pub spec: PerturbationSpec,
    pub ops: BTreeSet<PerturbationOp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub replay: ReplaySpec,
    pub refresh: RefreshConfig,
    pub policy: ModePolicy,
    pub prior: PriorConfig,
    /// Applied to the map prior of every frame, in the ego frame.
    pub corruption: Option<Corruption>,
    /// `None` skips the AP summary.
    pub eval: Option<EvalConfig>,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            replay: ReplaySpec::default(),
            refresh: RefreshConfig::default(),
            policy: ModePolicy::Switching,
            prior: PriorConfig::default(),
            corruption: None,
            eval: Some(EvalConfig::standard()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub tile: TileIndex,
    pub temporal_available: bool,
    pub map_available: bool,
    pub mode: Mode,
    pub gt_in_range: usize,
    pub temporal_prior: usize,
    pub map_prior: usize,
    pub predictions: usize,
    pub refreshed: usize,
    /// Set cells in H_t and H_m.
    pub temporal_cells: usize,
    pub map_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApSummary {
    pub detector: APReport,
    pub temporal_prior: APReport,
    pub map_prior: APReport,
}

/// Everything an episode produces that is a function of its inputs alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub world_seed: u64,
    pub replay_seed: u64,
    pub frames: Vec<FrameRecord>,
    pub ap: Option<ApSummary>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn mode_trace(&self) -> Vec<Mode> {
        self.frames.iter().map(|f| f.mode).collect()
    }
}

/// Wall-clock milliseconds per stage for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageLatency {
    pub retrieval_ms: f64,
    pub rasterization_ms: f64,
    pub refreshment_ms: f64,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub report: RunReport,
    pub latency: Vec<StageLatency>,
    pub map: GlobalMap,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Median of each stage over the frames.
pub fn median_latency(lat: &[StageLatency]) -> StageLatency {
    let med = |f: fn(&StageLatency) -> f64| {
        let mut v: Vec<f64> = lat.iter().map(f).collect();
        super::bench::median(&mut v)
    };
    StageLatency {
        retrieval_ms: med(|l| l.retrieval_ms),
        rasterization_ms: med(|l| l.rasterization_ms),
        refreshment_ms: med(|l| l.refreshment_ms),
    }
}

/// Ground truth touching the range, ego frame. Scans a strict 3x3 block so
/// nothing near the ego is missed.
pub fn ground_truth_in_range(gt: &GlobalMap, pose: &EgoPose, cfg: &PriorConfig) -> Vec<MapVector> {
    let opts = RetrievalOptions { strict_3x3: true };
    gt.retrieve(Layer::StaticMap, pose, &cfg.raster.range, opts)
}

/// What an observer sees of one frame after the priors are assembled.
pub struct FrameView<'a> {
    pub frame: usize,
    pub pose: &'a EgoPose,
    pub mode: Mode,
    pub heatmaps: &'a PriorHeatmaps,
    pub ground_truth: &'a [MapVector],
}

pub fn run_episode(world: &World, cfg: &EpisodeConfig) -> Result<Episode> {
    run_episode_with(world, cfg, |_| {})
}

pub fn run_episode_with(
    world: &World,
    cfg: &EpisodeConfig,
    mut observe: impl FnMut(FrameView<'_>),
) -> Result<Episode> {
    cfg.replay.validate()?;
    cfg.prior.validate()?;
    let range = cfg.prior.raster.range;
    let seed = cfg.replay.seed;
    let trajectory = world.trajectory(cfg.replay.step(), cfg.replay.frames);

    let mut gt_map = GlobalMap::for_range(&range)?;
    gt_map.ingest_static(world.vectors.iter().cloned());
    let mut map = GlobalMap::for_range(&range)?;
    map.ingest_static(world.vectors.iter().cloned());
    map.retain_static_tiles(|t| cfg.replay.map_coverage.covers(seed, t));
    let pool = ElementPool::new(world.vectors.iter().cloned());

    let mut det_rng = substream(seed, DETECTOR_STREAM);
    let mut mode_rng = substream(seed, MODE_STREAM);
    let mut frames = Vec::with_capacity(trajectory.len());
    let mut latency = Vec::with_capacity(trajectory.len());
    let mut eval_frames: [Vec<EvalFrame>; 3] = Default::default();

    for (k, pose) in trajectory.iter().enumerate() {
        let t = Instant::now();
        let temporal = retrieve_priors(&map, Layer::Temporal, pose, &cfg.prior);
        let static_map = retrieve_priors(&map, Layer::StaticMap, pose, &cfg.prior);
        let retrieval_ms = ms(t);

        let temporal_available = !temporal.is_empty();
        let map_available = !static_map.is_empty();
        let mode = match &cfg.policy {
            ModePolicy::Switching => select_inference_mode(temporal_available, map_available),
            ModePolicy::Fixed { mode } => *mode,
            ModePolicy::Sampled { ratio } => sample_mode(ratio, &mut mode_rng),
        };
        let temporal = if mode == Mode::NonPrior {
            Vec::new()
        } else {
            temporal
        };
        let mut map_prior = if mode == Mode::TemporalMapFusion {
            static_map
        } else {
            Vec::new()
        };
        if let (Some(c), false) = (&cfg.corruption, map_prior.is_empty()) {
            let mut spec = c.spec.clone();
            spec.seed = c.spec.seed ^ k as u64;
            let mut rng = substream(spec.seed, PERTURB_STREAM);
            map_prior = apply(&map_prior, &pool, &spec, &c.ops, &mut rng)?;
        }

        let t = Instant::now();
        let heatmaps = PriorHeatmaps {
            temporal: rasterize(&temporal, &cfg.prior.raster)?,
            map: rasterize(&map_prior, &cfg.prior.raster)?,
        };
        let rasterization_ms = ms(t);

        let gt = ground_truth_in_range(&gt_map, pose, &cfg.prior);
        observe(FrameView {
            frame: k,
            pose,
            mode,
            heatmaps: &heatmaps,
            ground_truth: &gt,
        });
        let preds = replay_predict(&gt, &cfg.replay, &mut det_rng);

        let t = Instant::now();
        let refreshed = map.refresh(&preds, pose, &cfg.refresh);
        let refreshment_ms = ms(t);

        frames.push(FrameRecord {
            frame: k,
            tile: map.tile_index_of(pose),
            temporal_available,
            map_available,
            mode,
            gt_in_range: gt.len(),
            temporal_prior: temporal.len(),
            map_prior: map_prior.len(),
            predictions: preds.len(),
            refreshed: refreshed.len(),
            temporal_cells: heatmaps.temporal.count_ones(),
            map_cells: heatmaps.map.count_ones(),
        });
        latency.push(StageLatency {
            retrieval_ms,
            rasterization_ms,
            refreshment_ms,
        });
        if cfg.eval.is_some() {
            for (slot, preds) in eval_frames.iter_mut().zip([preds, temporal, map_prior]) {
                slot.push(EvalFrame {
                    preds,
                    gts: gt.clone(),
                });
            }
        }
    }

    let ap = match &cfg.eval {
        Some(ec) => {
            let [d, t, m] = eval_frames;
            Some(ApSummary {
                detector: evaluate_frames(&d, ec)?,
                temporal_prior: evaluate_frames(&t, ec)?,
                map_prior: evaluate_frames(&m, ec)?,
            })
        }
        None => None,
    };
    Ok(Episode {
        report: RunReport {
            world_seed: world.spec.seed,
            replay_seed: seed,
            frames,
            ap,
        },
        latency,
        map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use crate::sim::world::{generate_world, WorldSpec};

    fn small_world() -> World {
        generate_world(&WorldSpec {
            blocks: 2,
            route_length: 200.0,
            ..WorldSpec::default()
        })
        .unwrap()
    }

    fn cfg(coverage: Coverage, frames: usize) -> EpisodeConfig {
        EpisodeConfig {
            replay: ReplaySpec {
                frames,
                map_coverage: coverage,
                ..ReplaySpec::default()
            },
            eval: None,
            ..EpisodeConfig::default()
        }
    }

    #[test]
    fn perfect_detector() {
        let w = small_world();
        let spec = ReplaySpec {
            detector_noise_sigma: 0.0,
            detector_dropout: 0.0,
            ..ReplaySpec::default()
        };
        let preds = replay_predict(&w.vectors, &spec, &mut seeded_rng(1));
        assert_eq!(preds.len(), w.vectors.len());
        for (p, g) in preds.iter().zip(&w.vectors) {
            assert_eq!(p.geometry, g.geometry);
            assert_eq!(p.confidence, 1.0);
        }
        let none = ReplaySpec {
            detector_dropout: 1.0,
            ..spec
        };
        assert!(replay_predict(&w.vectors, &none, &mut seeded_rng(1)).is_empty());
    }

    #[test]
    fn cold_start_without_map() {
        let ep = run_episode(&small_world(), &cfg(Coverage::Fraction(0.0), 20)).unwrap();
        let trace = ep.report.mode_trace();
        assert_eq!(trace[0], Mode::NonPrior);
        assert!(
            trace[1..].iter().all(|m| *m == Mode::TemporalPrior),
            "{trace:?}"
        );
    }

    #[test]
    fn full_coverage_fuses() {
        let ep = run_episode(&small_world(), &cfg(Coverage::Fraction(1.0), 20)).unwrap();
        assert!(ep
            .report
            .mode_trace()
            .iter()
            .all(|m| *m == Mode::TemporalMapFusion));
        assert_eq!(ep.latency.len(), 20);
    }

    #[test]
    fn perfect_map_prior_is_ground_truth() {
        let w = small_world();
        let mut c = cfg(Coverage::Fraction(1.0), 10);
        c.prior.vertical_band = None;
        let mut seen = 0;
        run_episode_with(&w, &c, |view| {
            let expect = rasterize(view.ground_truth, &c.prior.raster).unwrap();
            assert_eq!(view.mode, Mode::TemporalMapFusion);
            assert_eq!(view.heatmaps.map, expect, "frame {}", view.frame);
            seen += 1;
        })
        .unwrap();
        assert_eq!(seen, 10);
    }

    #[test]
    fn coverage_json_forms() {
        let f: Coverage = serde_json::from_str("0.5").unwrap();
        assert_eq!(f, Coverage::Fraction(0.5));
        let t: Coverage = serde_json::from_str(r#"[{"i": 1, "j": -2}]"#).unwrap();
        assert!(t.covers(0, &TileIndex::new(1, -2)));
        assert!(!t.covers(0, &TileIndex::new(0, 0)));
    }
}
