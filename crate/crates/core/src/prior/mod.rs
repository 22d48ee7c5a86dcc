//! Tri-mode prior assembly: which priors a frame sees, and their BEV heatmaps.
//!
//! * `non_prior`: both heatmaps are zero.
//! * `temporal_prior`: the temporal heatmap is rasterized from the temporal
//!   layer, the map heatmap is zero.
//! * `temporal_map_fusion`: both layers are retrieved and rasterized.
//!
//! Retrieved vectors pass the range filter inside [`GlobalMap::retrieve`] and
//! then a vertical filter that drops elements on another level (overpasses,
//! tunnels) before rasterization.

pub mod export;
mod raster;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::EgoPose;
use crate::perturbation::{instance_displacement, PerturbationSpec};
use crate::tile_store::{GlobalMap, Layer, MapVector, RetrievalOptions};

pub use raster::{rasterize, segment_hits_cell, Heatmap, RasterConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    NonPrior,
    TemporalPrior,
    TemporalMapFusion,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::NonPrior => "non_prior",
            Mode::TemporalPrior => "temporal_prior",
            Mode::TemporalMapFusion => "temporal_map_fusion",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Mode::NonPrior, Mode::TemporalPrior, Mode::TemporalMapFusion]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown mode `{s}`")))
    }
}

/// Training-time sampling probabilities for the three modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeRatio {
    pub non_prior: f64,
    pub temporal: f64,
    pub fusion: f64,
}

impl ModeRatio {
    pub fn new(non_prior: f64, temporal: f64, fusion: f64) -> Result<Self> {
        let parts = [non_prior, temporal, fusion];
        if parts.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::config(format!(
                "mode ratios must be >= 0, got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!(
                "mode ratios must sum to 1, got {sum}"
            )));
        }
        Ok(Self {
            non_prior,
            temporal,
            fusion,
        })
    }
}

impl Default for ModeRatio {
    /// 0.50 : 0.30 : 0.20.
    fn default() -> Self {
        Self {
            non_prior: 0.5,
            temporal: 0.3,
            fusion: 0.2,
        }
    }
}

pub fn sample_mode<R: Rng + ?Sized>(ratio: &ModeRatio, rng: &mut R) -> Mode {
    let u: f64 = rng.random();
    if u < ratio.non_prior {
        Mode::NonPrior
    } else if u < ratio.non_prior + ratio.temporal {
        Mode::TemporalPrior
    } else {
        Mode::TemporalMapFusion
    }
}

/// Inference-time switching from prior availability. With only a map prior
/// the fusion mode runs on an empty temporal heatmap.
pub fn select_inference_mode(temporal_available: bool, map_available: bool) -> Mode {
    match (temporal_available, map_available) {
        (_, true) => Mode::TemporalMapFusion,
        (true, false) => Mode::TemporalPrior,
        (false, false) => Mode::NonPrior,
    }
}

/// Keeps vectors whose mean vertex height is within `band` of `ego_z`.
pub fn vertical_filter(vectors: Vec<MapVector>, ego_z: f64, band: f64) -> Vec<MapVector> {
    assert!(band > 0.0, "vertical band must be positive");
    vectors
        .into_iter()
        .filter(|v| (v.geometry.mean_z() - ego_z).abs() <= band)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub raster: RasterConfig,
    /// Vertical band in metres; `None` disables the filter (2D maps).
    pub vertical_band: Option<f64>,
    pub retrieval: RetrievalOptions,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            raster: RasterConfig::default(),
            vertical_band: Some(3.0),
            retrieval: RetrievalOptions::default(),
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(band) = self.vertical_band {
            if band.is_nan() || band <= 0.0 {
                return Err(Error::config(format!(
                    "vertical band must be positive, got {band}"
                )));
            }
        }
        self.raster.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorHeatmaps {
    pub temporal: Heatmap,
    pub map: Heatmap,
}

impl PriorHeatmaps {
    pub fn zeros(cfg: &RasterConfig) -> Result<Self> {
        let z = Heatmap::for_config(cfg)?;
        Ok(Self {
            temporal: z.clone(),
            map: z,
        })
    }
}

/// Range-filtered, vertically filtered ego-frame vectors of one layer.
pub fn retrieve_priors(
    map: &GlobalMap,
    layer: Layer,
    pose: &EgoPose,
    cfg: &PriorConfig,
) -> Vec<MapVector> {
    let vectors = map.retrieve(layer, pose, &cfg.raster.range, cfg.retrieval);
    match cfg.vertical_band {
        // ego-frame heights are relative to the ego
        Some(band) => vertical_filter(vectors, 0.0, band),
        None => vectors,
    }
}

/// Priors of one frame together with the vectors behind them.
#[derive(Debug, Clone)]
pub struct AssembledPriors {
    pub mode: Mode,
    pub heatmaps: PriorHeatmaps,
    pub temporal_vectors: Vec<MapVector>,
    pub map_vectors: Vec<MapVector>,
}

pub fn assemble_priors(
    mode: Mode,
    map: &GlobalMap,
    pose: &EgoPose,
    cfg: &PriorConfig,
) -> Result<PriorHeatmaps> {
    assemble_priors_with(mode, map, pose, cfg, Ok).map(|a| a.heatmaps)
}

/// As [`assemble_priors`], passing the map-layer vectors through `map_hook`
/// (e.g. a corruption step) before rasterization.
pub fn assemble_priors_with(
    mode: Mode,
    map: &GlobalMap,
    pose: &EgoPose,
    cfg: &PriorConfig,
    map_hook: impl FnOnce(Vec<MapVector>) -> Result<Vec<MapVector>>,
) -> Result<AssembledPriors> {
    cfg.validate()?;
    let mut heatmaps = PriorHeatmaps::zeros(&cfg.raster)?;
    let mut temporal_vectors = Vec::new();
    let mut map_vectors = Vec::new();
    if mode != Mode::NonPrior {
        temporal_vectors = retrieve_priors(map, Layer::Temporal, pose, cfg);
        heatmaps.temporal = rasterize(&temporal_vectors, &cfg.raster)?;
        if mode == Mode::TemporalMapFusion {
            map_vectors = map_hook(retrieve_priors(map, Layer::StaticMap, pose, cfg))?;
            heatmaps.map = rasterize(&map_vectors, &cfg.raster)?;
        }
    }
    Ok(AssembledPriors {
        mode,
        heatmaps,
        temporal_vectors,
        map_vectors,
    })
}

/// One training draw: sample a mode from `ratio`, then assemble priors with
/// instance-level displacement applied to the map prior.
pub fn training_priors<R: Rng + ?Sized>(
    ratio: &ModeRatio,
    map: &GlobalMap,
    pose: &EgoPose,
    cfg: &PriorConfig,
    displacement: &PerturbationSpec,
    rng: &mut R,
) -> Result<AssembledPriors> {
    displacement.validate()?;
    let mode = sample_mode(ratio, rng);
    assemble_priors_with(mode, map, pose, cfg, |v| {
        Ok(instance_displacement(&v, displacement, rng))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ego_to_global, Point3, Polyline3};
    use crate::rng::seeded_rng;
    use crate::tile_store::{MapClass, RefreshConfig};

    fn ego_vector(id: u64, class: MapClass, pts: &[(f64, f64, f64)]) -> MapVector {
        let g =
            Polyline3::new(pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect()).unwrap();
        MapVector::new(id, class, g, 0.95, Layer::StaticMap).unwrap()
    }

    // coordinates kept off cell boundaries so the UTM round trip cannot flip a cell
    fn populated(pose: &EgoPose) -> (GlobalMap, Vec<MapVector>) {
        let mut map = GlobalMap::new(60.0).unwrap();
        let local = vec![
            ego_vector(1, MapClass::Divider, &[(-20.0, 1.6, 0.0), (20.0, 1.6, 0.2)]),
            ego_vector(
                2,
                MapClass::Boundary,
                &[(-25.0, -7.1, 0.0), (25.0, -7.1, 0.0)],
            ),
            ego_vector(
                3,
                MapClass::PedCrossing,
                &[(10.0, -6.1, 0.0), (10.0, 6.1, 0.0)],
            ),
        ];
        map.ingest_static(
            local
                .iter()
                .map(|v| v.with_geometry(ego_to_global(&v.geometry, pose))),
        );
        map.refresh(&local[..2], pose, &RefreshConfig::new(0.5).unwrap());
        (map, local)
    }

    #[test]
    fn ratio_validation() {
        assert!(ModeRatio::new(0.5, 0.3, 0.2).is_ok());
        assert!(ModeRatio::new(0.3, 0.42, 0.28).is_ok());
        assert!(ModeRatio::new(0.5, 0.5, 0.5).is_err());
        assert!(ModeRatio::new(-0.1, 0.6, 0.5).is_err());
    }

    #[test]
    fn degenerate_ratios_are_certain() {
        let mut rng = seeded_rng(1);
        let only_non = ModeRatio::new(1.0, 0.0, 0.0).unwrap();
        let only_fusion = ModeRatio::new(0.0, 0.0, 1.0).unwrap();
        for _ in 0..1000 {
            assert_eq!(sample_mode(&only_non, &mut rng), Mode::NonPrior);
            assert_eq!(sample_mode(&only_fusion, &mut rng), Mode::TemporalMapFusion);
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let r = ModeRatio::default();
        let a: Vec<Mode> = {
            let mut rng = seeded_rng(5);
            (0..100).map(|_| sample_mode(&r, &mut rng)).collect()
        };
        let b: Vec<Mode> = {
            let mut rng = seeded_rng(5);
            (0..100).map(|_| sample_mode(&r, &mut rng)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn inference_switching() {
        assert_eq!(select_inference_mode(true, true), Mode::TemporalMapFusion);
        assert_eq!(select_inference_mode(true, false), Mode::TemporalPrior);
        assert_eq!(select_inference_mode(false, false), Mode::NonPrior);
        assert_eq!(select_inference_mode(false, true), Mode::TemporalMapFusion);
    }

    #[test]
    fn vertical_filter_examples() {
        let flat = vec![ego_vector(
            1,
            MapClass::Divider,
            &[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)],
        )];
        assert_eq!(vertical_filter(flat.clone(), 0.0, 3.0), flat);
        let high = vec![ego_vector(
            2,
            MapClass::Divider,
            &[(0.0, 0.0, 9.0), (1.0, 0.0, 11.0)],
        )];
        assert!(vertical_filter(high.clone(), 0.0, 3.0).is_empty());
        assert_eq!(vertical_filter(high.clone(), 0.0, f64::INFINITY), high);
    }

    #[test]
    fn non_prior_is_zero() {
        let pose = EgoPose::new(500_000.0, 4_000_000.0, 20.0, 0.4).unwrap();
        let (map, _) = populated(&pose);
        let h = assemble_priors(Mode::NonPrior, &map, &pose, &PriorConfig::default()).unwrap();
        assert!(h.temporal.is_zero() && h.map.is_zero());
        assert_eq!(h.temporal.shape(), (3, 200, 100));
    }

    #[test]
    fn temporal_mode_zeroes_map_heatmap() {
        let pose = EgoPose::new(500_000.0, 4_000_000.0, 20.0, 0.4).unwrap();
        let (map, _) = populated(&pose);
        let h = assemble_priors(Mode::TemporalPrior, &map, &pose, &PriorConfig::default()).unwrap();
        assert!(!h.temporal.is_zero());
        assert!(h.map.is_zero());
    }

    #[test]
    fn fusion_with_exact_map_matches_direct_rasterization() {
        let pose = EgoPose::new(500_000.0, 4_000_000.0, 20.0, 0.4).unwrap();
        let (map, local) = populated(&pose);
        let cfg = PriorConfig::default();
        let h = assemble_priors(Mode::TemporalMapFusion, &map, &pose, &cfg).unwrap();
        assert_eq!(h.map, rasterize(&local, &cfg.raster).unwrap());
        assert_eq!(h.temporal, rasterize(&local[..2], &cfg.raster).unwrap());
    }

    #[test]
    fn training_draw_displaces_map_prior() {
        let pose = EgoPose::new(500_000.0, 4_000_000.0, 20.0, 0.4).unwrap();
        let (map, _) = populated(&pose);
        let ratio = ModeRatio::new(0.0, 0.0, 1.0).unwrap();
        let spec = PerturbationSpec {
            inst_select_prob: 1.0,
            inst_disp_min: 6.0,
            inst_disp_range: 6.0,
            ..PerturbationSpec::default()
        };
        let out = training_priors(
            &ratio,
            &map,
            &pose,
            &PriorConfig::default(),
            &spec,
            &mut seeded_rng(0),
        )
        .unwrap();
        assert_eq!(out.mode, Mode::TemporalMapFusion);
        let exact = retrieve_priors(&map, Layer::StaticMap, &pose, &PriorConfig::default());
        for (a, b) in exact.iter().zip(&out.map_vectors) {
            let d = a.geometry.points()[0].planar_distance(&b.geometry.points()[0]);
            assert!((d - 6.0).abs() < 1e-6);
        }
    }
}
