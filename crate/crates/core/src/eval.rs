//! Chamfer-distance average precision over the three map classes.
//!
//! Matching is one-to-one and greedy in descending score order: each
//! prediction takes the nearest still-unmatched ground truth of its frame whose
//! Chamfer distance is below the threshold. Precision is interpolated by the
//! running maximum from the right and AP is the area under that curve,
//! summed at the recall steps.
//!
//! A class with no ground truth has no recall axis, so its AP is undefined.
//! It is reported as 0 with `defined = false` and left out of the mAP.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, Polyline3};
use crate::tile_store::{MapClass, MapVector};

pub const STANDARD_THRESHOLDS: [f64; 3] = [0.5, 1.0, 1.5];
pub const EXTENDED_THRESHOLDS: [f64; 3] = [1.0, 1.5, 2.0];
pub const DEFAULT_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// BEV distance, heights ignored.
    #[default]
    Planar,
    Full3d,
}

impl DistanceMode {
    fn dist(self, a: &Point3, b: &Point3) -> f64 {
        match self {
            DistanceMode::Planar => a.planar_distance(b),
            DistanceMode::Full3d => a.distance(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    pub n_pts: usize,
    pub mode: DistanceMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self::standard()
    }
}

impl EvalConfig {
    pub fn standard() -> Self {
        Self {
            thresholds: STANDARD_THRESHOLDS.to_vec(),
            n_pts: DEFAULT_SAMPLES,
            mode: DistanceMode::Planar,
        }
    }

    /// Thresholds used for long-range perception.
    pub fn extended() -> Self {
        Self {
            thresholds: EXTENDED_THRESHOLDS.to_vec(),
            ..Self::standard()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::config("at least one threshold is required"));
        }
        if let Some(t) = self
            .thresholds
            .iter()
            .find(|t| !(t.is_finite() && **t > 0.0))
        {
            return Err(Error::config(format!(
                "thresholds must be positive, got {t}"
            )));
        }
        if self.n_pts < 2 {
            return Err(Error::config(format!(
                "n_pts must be at least 2, got {}",
                self.n_pts
            )));
        }
        Ok(())
    }
}

/// Point set resampled once so pairwise distances can reuse it.
#[derive(Debug, Clone)]
pub struct Sampled(Vec<Point3>);

impl Sampled {
    pub fn new(poly: &Polyline3, n_pts: usize) -> Result<Self> {
        Ok(Self(poly.resample(n_pts)?.points().to_vec()))
    }
}

fn mean_nearest(from: &[Point3], to: &[Point3], mode: DistanceMode) -> f64 {
    let total: f64 = from
        .iter()
        .map(|p| {
            to.iter()
                .map(|q| mode.dist(p, q))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / from.len() as f64
}

pub fn chamfer_sampled(a: &Sampled, b: &Sampled, mode: DistanceMode) -> f64 {
    // halves summed in a fixed order keep CD(a, b) == CD(b, a) bit for bit
    let ab = mean_nearest(&a.0, &b.0, mode);
    let ba = mean_nearest(&b.0, &a.0, mode);
    let (lo, hi) = if ab <= ba { (ab, ba) } else { (ba, ab) };
    0.5 * (lo + hi)
}

/// Symmetric Chamfer distance between `a` and `b` after resampling both to
/// `n_pts` points by arc length.
pub fn chamfer_distance(
    a: &Polyline3,
    b: &Polyline3,
    n_pts: usize,
    mode: DistanceMode,
) -> Result<f64> {
    Ok(chamfer_sampled(
        &Sampled::new(a, n_pts)?,
        &Sampled::new(b, n_pts)?,
        mode,
    ))
}

/// Planar gap between two bounding boxes. Every point pair is at least this
/// far apart, so it bounds the Chamfer distance from below.
fn bbox_gap(a: &Polyline3, b: &Polyline3) -> f64 {
    let (a0e, a0n, a1e, a1n) = a.bounds();
    let (b0e, b0n, b1e, b1n) = b.bounds();
    let de = (b0e - a1e).max(a0e - b1e).max(0.0);
    let dn = (b0n - a1n).max(a0n - b1n).max(0.0);
    de.hypot(dn)
}

/// Predictions and ground truth of one class in one frame, reduced to a
/// distance matrix `cd[pred][gt]`. Pairs whose boxes are at least `cutoff`
/// apart are stored as infinity without resampling.
#[derive(Debug, Clone)]
pub struct ClassFrame {
    pub scores: Vec<f64>,
    pub cd: Vec<Vec<f64>>,
    pub num_gt: usize,
}

impl ClassFrame {
    pub fn build(
        preds: &[(&Polyline3, f64)],
        gts: &[&Polyline3],
        n_pts: usize,
        mode: DistanceMode,
        cutoff: f64,
    ) -> Result<Self> {
        let gs = gts
            .iter()
            .map(|g| Sampled::new(g, n_pts))
            .collect::<Result<Vec<_>>>()?;
        let mut cd = Vec::with_capacity(preds.len());
        for (p, _) in preds {
            let ps = Sampled::new(p, n_pts)?;
            let row = gts
                .iter()
                .zip(&gs)
                .map(|(g, gs)| {
                    if bbox_gap(p, g) >= cutoff {
                        f64::INFINITY
                    } else {
                        chamfer_sampled(&ps, gs, mode)
                    }
                })
                .collect();
            cd.push(row);
        }
        Ok(Self {
            scores: preds.iter().map(|(_, s)| *s).collect(),
            cd,
            num_gt: gts.len(),
        })
    }
}

/// Greedy matching in descending score order across all frames. Returns the
/// true-positive flag of each prediction in that order.
pub fn greedy_match(frames: &[ClassFrame], threshold: f64) -> Vec<bool> {
    let mut order: Vec<(usize, usize)> = frames
        .iter()
        .enumerate()
        .flat_map(|(f, fr)| (0..fr.scores.len()).map(move |k| (f, k)))
        .collect();
    // stable: equal scores keep frame then input order
    order.sort_by(|&(fa, ka), &(fb, kb)| frames[fb].scores[kb].total_cmp(&frames[fa].scores[ka]));
    let mut taken: Vec<Vec<bool>> = frames.iter().map(|fr| vec![false; fr.num_gt]).collect();
    order
        .into_iter()
        .map(|(f, k)| {
            let row = &frames[f].cd[k];
            let best = (0..row.len())
                .filter(|&g| !taken[f][g] && row[g] < threshold)
                .min_by(|&a, &b| row[a].total_cmp(&row[b]));
            match best {
                Some(g) => {
                    taken[f][g] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Area under the right-max interpolated precision/recall curve. `None` when
/// there is no ground truth.
pub fn ap_from_matches(tp: &[bool], num_gt: usize) -> Option<f64> {
    if num_gt == 0 {
        return None;
    }
    let mut precision = Vec::with_capacity(tp.len());
    let mut recall = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (k, &t) in tp.iter().enumerate() {
        hits += t as usize;
        precision.push(hits as f64 / (k + 1) as f64);
        recall.push(hits as f64 / num_gt as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for (r, p) in recall.into_iter().zip(precision) {
        ap += (r - prev_r) * p;
        prev_r = r;
    }
    Some(ap)
}

/// AP of one class at one threshold over several frames.
pub fn average_precision_frames(frames: &[ClassFrame], threshold: f64) -> Option<f64> {
    let num_gt = frames.iter().map(|f| f.num_gt).sum();
    ap_from_matches(&greedy_match(frames, threshold), num_gt)
}

/// AP of one class at one threshold in a single frame. Scores are taken from
/// the pair, not from the vectors' confidences.
pub fn average_precision(
    preds: &[(MapVector, f64)],
    gts: &[MapVector],
    threshold: f64,
    n_pts: usize,
    mode: DistanceMode,
) -> Result<Option<f64>> {
    let p: Vec<_> = preds.iter().map(|(v, s)| (&v.geometry, *s)).collect();
    let g: Vec<_> = gts.iter().map(|v| &v.geometry).collect();
    let frame = ClassFrame::build(&p, &g, n_pts, mode, threshold)?;
    Ok(average_precision_frames(&[frame], threshold))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class: MapClass,
    pub num_gt: usize,
    pub num_pred: usize,
    /// One value per configured threshold, 0 when undefined.
    pub ap: Vec<f64>,
    pub mean: f64,
    pub defined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct APReport {
    pub thresholds: Vec<f64>,
    pub classes: Vec<ClassAp>,
    /// Mean over classes that have ground truth; 0 when none do.
    pub map: f64,
    pub map_defined: bool,
}

impl APReport {
    pub fn class(&self, class: MapClass) -> &ClassAp {
        &self.classes[class.index()]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for APReport {
    /// Fixed-width table, three decimals, `n/a` for undefined classes.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<14}{:>6}{:>8}", "class", "n_gt", "n_pred")?;
        for t in &self.thresholds {
            write!(f, "{:>9}", format!("AP@{t:.1}"))?;
        }
        writeln!(f, "{:>9}", "mean")?;
        for c in &self.classes {
            write!(f, "{:<14}{:>6}{:>8}", c.class.name(), c.num_gt, c.num_pred)?;
            for ap in &c.ap {
                if c.defined {
                    write!(f, "{ap:>9.3}")?;
                } else {
                    write!(f, "{:>9}", "n/a")?;
                }
            }
            if c.defined {
                writeln!(f, "{:>9.3}", c.mean)?;
            } else {
                writeln!(f, "{:>9}", "n/a")?;
            }
        }
        if self.map_defined {
            writeln!(f, "mAP {:.3}", self.map)
        } else {
            writeln!(f, "mAP n/a")
        }
    }
}

/// One frame of predictions (scored by their confidence) and ground truth.
#[derive(Debug, Clone, Default)]
pub struct EvalFrame {
    pub preds: Vec<MapVector>,
    pub gts: Vec<MapVector>,
}

pub fn evaluate_frames(frames: &[EvalFrame], cfg: &EvalConfig) -> Result<APReport> {
    cfg.validate()?;
    let cutoff = cfg.thresholds.iter().copied().fold(0.0, f64::max);
    let mut classes = Vec::with_capacity(MapClass::ALL.len());
    for class in MapClass::ALL {
        let mut per_frame = Vec::with_capacity(frames.len());
        let mut num_pred = 0;
        for fr in frames {
            let p: Vec<_> = fr
                .preds
                .iter()
                .filter(|v| v.class == class)
                .map(|v| (&v.geometry, v.confidence))
                .collect();
            let g: Vec<_> = fr
                .gts
                .iter()
                .filter(|v| v.class == class)
                .map(|v| &v.geometry)
                .collect();
            num_pred += p.len();
            per_frame.push(ClassFrame::build(&p, &g, cfg.n_pts, cfg.mode, cutoff)?);
        }
        let num_gt: usize = per_frame.iter().map(|f| f.num_gt).sum();
        let aps: Vec<Option<f64>> = cfg
            .thresholds
            .iter()
            .map(|&t| average_precision_frames(&per_frame, t))
            .collect();
        let defined = num_gt > 0;
        let ap: Vec<f64> = aps.into_iter().map(|a| a.unwrap_or(0.0)).collect();
        let mean = ap.iter().sum::<f64>() / ap.len() as f64;
        classes.push(ClassAp {
            class,
            num_gt,
            num_pred,
            ap,
            mean,
            defined,
        });
    }
    let defined: Vec<f64> = classes
        .iter()
        .filter(|c| c.defined)
        .map(|c| c.mean)
        .collect();
    let map_defined = !defined.is_empty();
    let map = if map_defined {
        defined.iter().sum::<f64>() / defined.len() as f64
    } else {
        0.0
    };
    Ok(APReport {
        thresholds: cfg.thresholds.clone(),
        classes,
        map,
        map_defined,
    })
}

/// Single-frame evaluation.
pub fn evaluate(preds: &[MapVector], gts: &[MapVector], cfg: &EvalConfig) -> Result<APReport> {
    evaluate_frames(
        &[EvalFrame {
            preds: preds.to_vec(),
            gts: gts.to_vec(),
        }],
        cfg,
    )
}
