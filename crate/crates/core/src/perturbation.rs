//! Artificial HD-map corruption.
//!
//! Six operators simulate the ways a cheap HD map disagrees with the world:
//!
//! | operator              | level    | effect                                              |
//! |-----------------------|----------|-----------------------------------------------------|
//! | `inst_displacement`   | instance | Bernoulli-selected vectors shifted by `U[min, max]` m in a random direction |
//! | `inst_addition`       | instance | `U{0..add_max}` pool elements dropped into the frame |
//! | `inst_deletion`       | instance | `U{0..min(del_max, n)}` vectors removed              |
//! | `frame_displacement`  | frame    | one `U[-r, r]` offset per axis applied to everything |
//! | `frame_rotation`      | frame    | one `U[-θ, θ]` rotation about the ego origin         |
//! | `frame_scaling`       | frame    | one `U[lo, hi]` planar scale about the ego origin    |
//!
//! Frame operators assume ego-frame input. Composition always runs the
//! instance operators first, then the frame operators, in the table order.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PerceptionRange, Polyline3};
use crate::rng::seeded_rng;
use crate::tile_store::MapVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub seed: u64,
    /// Lower bound of the instance displacement magnitude, metres.
    pub inst_disp_min: f64,
    /// Upper bound of the instance displacement magnitude, metres.
    pub inst_disp_range: f64,
    pub inst_select_prob: f64,
    pub add_max: usize,
    pub del_max: usize,
    /// Per-axis half width of the frame offset, metres.
    pub frame_disp_range: f64,
    /// Half width of the frame rotation, degrees.
    pub frame_rot_range: f64,
    pub frame_scale_range: (f64, f64),
    /// Region where added elements are placed (ego frame).
    pub add_region: PerceptionRange,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            inst_disp_min: 0.0,
            inst_disp_range: 6.0,
            inst_select_prob: 0.5,
            add_max: 10,
            del_max: 10,
            frame_disp_range: 6.0,
            frame_rot_range: 15.0,
            frame_scale_range: (0.8, 1.2),
            add_region: PerceptionRange::default(),
        }
    }
}

impl PerturbationSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            ("inst_disp_min", self.inst_disp_min),
            ("inst_disp_range", self.inst_disp_range),
            ("frame_disp_range", self.frame_disp_range),
            ("frame_rot_range", self.frame_rot_range),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!(
                    "{name} must be a finite value >= 0, got {v}"
                )));
            }
        }
        if self.inst_disp_min > self.inst_disp_range {
            return Err(Error::config("inst_disp_min exceeds inst_disp_range"));
        }
        if !(0.0..=1.0).contains(&self.inst_select_prob) {
            return Err(Error::config(format!(
                "inst_select_prob must lie in [0, 1], got {}",
                self.inst_select_prob
            )));
        }
        let (lo, hi) = self.frame_scale_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(Error::config(format!(
                "frame scale range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
            )));
        }
        self.add_region.validate()
    }

    /// `key = value` lines, `#` comments allowed. Unknown keys are rejected.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(line_no, "expected key = value"))?;
            let (key, value) = (key.trim(), value.trim());
            let bad =
                |what: &str| Error::parse(line_no, format!("bad {what} `{value}` for `{key}`"));
            let float = || value.parse::<f64>().map_err(|_| bad("number"));
            let count = || value.parse::<usize>().map_err(|_| bad("count"));
            match key {
                "seed" => spec.seed = value.parse().map_err(|_| bad("seed"))?,
                "inst_disp_min" => spec.inst_disp_min = float()?,
                "inst_disp_range" => spec.inst_disp_range = float()?,
                "inst_select_prob" => spec.inst_select_prob = float()?,
                "add_max" => spec.add_max = count()?,
                "del_max" => spec.del_max = count()?,
                "frame_disp_range" => spec.frame_disp_range = float()?,
                "frame_rot_range" => spec.frame_rot_range = float()?,
                "frame_scale_lo" => spec.frame_scale_range.0 = float()?,
                "frame_scale_hi" => spec.frame_scale_range.1 = float()?,
                "add_region" => {
                    let parts: Vec<f64> = value
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("range"))?;
                    let [front, rear, left, right] = parts[..] else {
                        return Err(bad("range"));
                    };
                    spec.add_region = PerceptionRange {
                        front,
                        rear,
                        left,
                        right,
                    };
                }
                other => return Err(Error::parse(line_no, format!("unknown key `{other}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_config_string(&self) -> String {
        let r = &self.add_region;
        format!(
            "seed = {}\ninst_disp_min = {}\ninst_disp_range = {}\ninst_select_prob = {}\n\
             add_max = {}\ndel_max = {}\nframe_disp_range = {}\nframe_rot_range = {}\n\
             frame_scale_lo = {}\nframe_scale_hi = {}\nadd_region = {},{},{},{}\n",
            self.seed,
            self.inst_disp_min,
            self.inst_disp_range,
            self.inst_select_prob,
            self.add_max,
            self.del_max,
            self.frame_disp_range,
            self.frame_rot_range,
            self.frame_scale_range.0,
            self.frame_scale_range.1,
            r.front,
            r.rear,
            r.left,
            r.right
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationOp {
    InstDisplacement,
    InstAddition,
    InstDeletion,
    FrameDisplacement,
    FrameRotation,
    FrameScaling,
}

impl PerturbationOp {
    /// Application order used by [`apply`].
    pub const ORDER: [PerturbationOp; 6] = [
        PerturbationOp::InstDisplacement,
        PerturbationOp::InstAddition,
        PerturbationOp::InstDeletion,
        PerturbationOp::FrameDisplacement,
        PerturbationOp::FrameRotation,
        PerturbationOp::FrameScaling,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            PerturbationOp::InstDisplacement => "inst_displacement",
            PerturbationOp::InstAddition => "inst_addition",
            PerturbationOp::InstDeletion => "inst_deletion",
            PerturbationOp::FrameDisplacement => "frame_displacement",
            PerturbationOp::FrameRotation => "frame_rotation",
            PerturbationOp::FrameScaling => "frame_scaling",
        }
    }
}

impl fmt::Display for PerturbationOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PerturbationOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ORDER
            .into_iter()
            .find(|op| op.tag() == s)
            .ok_or_else(|| Error::config(format!("unknown perturbation `{s}`")))
    }
}

/// Templates for instance addition, stored centred on their vertex centroid.
#[derive(Debug, Clone, Default)]
pub struct ElementPool {
    templates: Vec<MapVector>,
}

impl ElementPool {
    pub fn new(elements: impl IntoIterator<Item = MapVector>) -> Self {
        let templates = elements
            .into_iter()
            .map(|v| {
                let (ce, cn) = v.geometry.centroid();
                v.with_geometry(v.geometry.translated(-ce, -cn))
            })
            .collect();
        Self { templates }
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn templates(&self) -> &[MapVector] {
        &self.templates
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn instance_displacement<R: Rng + ?Sized>(
    vectors: &[MapVector],
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Vec<MapVector> {
    vectors
        .iter()
        .map(|v| {
            if !rng.random_bool(spec.inst_select_prob) {
                return v.clone();
            }
            let magnitude = uniform(rng, spec.inst_disp_min, spec.inst_disp_range);
            let heading = uniform(rng, 0.0, 2.0 * PI);
            if magnitude == 0.0 {
                return v.clone();
            }
            let (s, c) = heading.sin_cos();
            v.with_geometry(v.geometry.translated(magnitude * c, magnitude * s))
        })
        .collect()
}

pub fn instance_addition<R: Rng + ?Sized>(
    vectors: &[MapVector],
    pool: &ElementPool,
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Result<Vec<MapVector>> {
    let n = rng.random_range(0..=spec.add_max);
    if n == 0 {
        return Ok(vectors.to_vec());
    }
    if pool.is_empty() {
        return Err(Error::config(
            "instance addition needs a non-empty element pool",
        ));
    }
    let region = &spec.add_region;
    let mut next_id = vectors
        .iter()
        .map(|v| v.id)
        .max()
        .map_or(0, |m| m.wrapping_add(1));
    let mut out = vectors.to_vec();
    for _ in 0..n {
        let template = &pool.templates[rng.random_range(0..pool.len())];
        let x = uniform(rng, -region.rear, region.front);
        let y = uniform(rng, -region.right, region.left);
        let mut added = template.with_geometry(template.geometry.translated(x, y));
        added.id = next_id;
        next_id = next_id.wrapping_add(1);
        out.push(added);
    }
    Ok(out)
}

pub fn instance_deletion<R: Rng + ?Sized>(
    vectors: &[MapVector],
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Vec<MapVector> {
    let n = rng.random_range(0..=spec.del_max.min(vectors.len()));
    if n == 0 {
        return vectors.to_vec();
    }
    let mut doomed = vec![false; vectors.len()];
    for i in index::sample(rng, vectors.len(), n) {
        doomed[i] = true;
    }
    vectors
        .iter()
        .zip(doomed)
        .filter(|(_, d)| !d)
        .map(|(v, _)| v.clone())
        .collect()
}

fn map_all(vectors: &[MapVector], f: impl Fn(&Polyline3) -> Polyline3) -> Vec<MapVector> {
    vectors
        .iter()
        .map(|v| v.with_geometry(f(&v.geometry)))
        .collect()
}

pub fn frame_displacement<R: Rng + ?Sized>(
    vectors: &[MapVector],
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Vec<MapVector> {
    let r = spec.frame_disp_range;
    let dx = uniform(rng, -r, r);
    let dy = uniform(rng, -r, r);
    map_all(vectors, |g| g.translated(dx, dy))
}

pub fn frame_rotation<R: Rng + ?Sized>(
    vectors: &[MapVector],
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Vec<MapVector> {
    let theta = uniform(rng, -spec.frame_rot_range, spec.frame_rot_range).to_radians();
    map_all(vectors, |g| g.rotated(theta))
}

pub fn frame_scaling<R: Rng + ?Sized>(
    vectors: &[MapVector],
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Vec<MapVector> {
    let (lo, hi) = spec.frame_scale_range;
    let s = uniform(rng, lo, hi);
    map_all(vectors, |g| g.scaled(s))
}

/// Applies the selected operators in [`PerturbationOp::ORDER`]. `pool` is
/// only consulted by instance addition.
pub fn apply<R: Rng + ?Sized>(
    vectors: &[MapVector],
    pool: &ElementPool,
    spec: &PerturbationSpec,
    ops: &BTreeSet<PerturbationOp>,
    rng: &mut R,
) -> Result<Vec<MapVector>> {
    spec.validate()?;
    let mut out = vectors.to_vec();
    for op in PerturbationOp::ORDER {
        if !ops.contains(&op) {
            continue;
        }
        out = match op {
            PerturbationOp::InstDisplacement => instance_displacement(&out, spec, rng),
            PerturbationOp::InstAddition => instance_addition(&out, pool, spec, rng)?,
            PerturbationOp::InstDeletion => instance_deletion(&out, spec, rng),
            PerturbationOp::FrameDisplacement => frame_displacement(&out, spec, rng),
            PerturbationOp::FrameRotation => frame_rotation(&out, spec, rng),
            PerturbationOp::FrameScaling => frame_scaling(&out, spec, rng),
        };
    }
    Ok(out)
}

/// [`apply`] with a generator seeded from `spec.seed`.
pub fn apply_seeded(
    vectors: &[MapVector],
    pool: &ElementPool,
    spec: &PerturbationSpec,
    ops: &BTreeSet<PerturbationOp>,
) -> Result<Vec<MapVector>> {
    apply(vectors, pool, spec, ops, &mut seeded_rng(spec.seed))
}

/// Parses tags such as `frame_rotation`, rejecting unknown ones.
pub fn parse_ops<'a>(tags: impl IntoIterator<Item = &'a str>) -> Result<BTreeSet<PerturbationOp>> {
    tags.into_iter().map(str::parse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use crate::rng::seeded_rng;
    use crate::tile_store::{Layer, MapClass};

    fn vec_at(id: u64, pts: &[(f64, f64)]) -> MapVector {
        let g = Polyline3::new(pts.iter().map(|&(e, n)| Point3::new(e, n, 0.5)).collect()).unwrap();
        MapVector::new(id, MapClass::Divider, g, 1.0, Layer::StaticMap).unwrap()
    }

    fn scene() -> Vec<MapVector> {
        (0..10)
            .map(|k| {
                let y = k as f64 * 2.0 - 9.0;
                vec_at(k, &[(-20.0, y), (0.0, y + 0.5), (25.0, y)])
            })
            .collect()
    }

    fn all_points(v: &[MapVector]) -> Vec<Point3> {
        v.iter()
            .flat_map(|m| m.geometry.points().to_vec())
            .collect()
    }

    fn pairwise(pts: &[Point3]) -> Vec<f64> {
        let mut d = Vec::new();
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                d.push(pts[i].planar_distance(&pts[j]));
            }
        }
        d
    }

    #[test]
    fn zero_ranges_are_identity() {
        let s = scene();
        let spec = PerturbationSpec {
            inst_disp_range: 0.0,
            add_max: 0,
            del_max: 0,
            frame_disp_range: 0.0,
            frame_rot_range: 0.0,
            frame_scale_range: (1.0, 1.0),
            ..PerturbationSpec::default()
        };
        let mut rng = seeded_rng(3);
        assert_eq!(instance_displacement(&s, &spec, &mut rng), s);
        assert_eq!(
            instance_addition(&s, &ElementPool::default(), &spec, &mut rng).unwrap(),
            s
        );
        assert_eq!(instance_deletion(&s, &spec, &mut rng), s);
        assert_eq!(frame_displacement(&s, &spec, &mut rng), s);
        assert_eq!(frame_rotation(&s, &spec, &mut rng), s);
        assert_eq!(frame_scaling(&s, &spec, &mut rng), s);
    }

    #[test]
    fn fixed_magnitude_moves_every_point_exactly() {
        let s = scene();
        let spec = PerturbationSpec {
            inst_select_prob: 1.0,
            inst_disp_min: 6.0,
            inst_disp_range: 6.0,
            ..PerturbationSpec::default()
        };
        let out = instance_displacement(&s, &spec, &mut seeded_rng(11));
        for (a, b) in all_points(&s).iter().zip(all_points(&out)) {
            assert!((a.planar_distance(&b) - 6.0).abs() < 1e-9);
            assert_eq!(a.z, b.z);
        }
    }

    #[test]
    fn unselected_instances_are_untouched() {
        let s = scene();
        let out = instance_displacement(&s, &PerturbationSpec::default(), &mut seeded_rng(5));
        let moved = s.iter().zip(&out).filter(|(a, b)| a != b).count();
        assert!(moved > 0 && moved < s.len());
        for (a, b) in s.iter().zip(&out) {
            assert_eq!(a.id, b.id);
            if a.geometry.points()[0] == b.geometry.points()[0] {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn addition_needs_pool_and_keeps_shape() {
        let s = scene();
        let spec = PerturbationSpec {
            add_max: 10,
            ..PerturbationSpec::default()
        };
        // find a seed that draws n > 0
        let mut rng = seeded_rng(1);
        let mut err_seen = false;
        for _ in 0..20 {
            if instance_addition(&s, &ElementPool::default(), &spec, &mut rng).is_err() {
                err_seen = true;
                break;
            }
        }
        assert!(err_seen);

        let template = vec_at(77, &[(100.0, 100.0), (110.0, 104.0), (112.0, 90.0)]);
        let pool = ElementPool::new([template.clone()]);
        let out = instance_addition(&s, &pool, &spec, &mut seeded_rng(2)).unwrap();
        assert_eq!(&out[..s.len()], &s[..]);
        let added = &out[s.len()..];
        let ids: BTreeSet<u64> = out.iter().map(|v| v.id).collect();
        assert_eq!(ids.len(), out.len());
        let want = pairwise(template.geometry.points());
        for a in added {
            let got = pairwise(a.geometry.points());
            for (x, y) in want.iter().zip(&got) {
                assert!((x - y).abs() < 1e-9);
            }
            let (cx, cy) = a.geometry.centroid();
            assert!(spec.add_region.contains(cx, cy));
        }
    }

    #[test]
    fn deletion_keeps_survivors_verbatim() {
        let s = scene();
        assert!(
            instance_deletion(&[], &PerturbationSpec::default(), &mut seeded_rng(0)).is_empty()
        );
        for seed in 0..20 {
            let out = instance_deletion(&s, &PerturbationSpec::default(), &mut seeded_rng(seed));
            assert!(out.len() <= s.len());
            for v in &out {
                assert_eq!(Some(v), s.iter().find(|o| o.id == v.id));
            }
            // survivors keep their relative order
            assert!(out.windows(2).all(|w| w[0].id < w[1].id));
        }
    }

    #[test]
    fn rotation_of_fifteen_degrees() {
        let p = vec_at(0, &[(10.0, 0.0), (20.0, 0.0)]);
        let out = p.geometry.rotated(15f64.to_radians());
        assert!((out.points()[0].e - 9.659).abs() < 1e-3);
        assert!((out.points()[0].n - 2.588).abs() < 1e-3);
    }

    #[test]
    fn scaling_example_and_distance_ratio() {
        let p = vec_at(0, &[(10.0, 5.0), (20.0, 0.0)]);
        assert_eq!(
            p.geometry.scaled(1.2).points()[0],
            Point3::new(12.0, 6.0, 0.5)
        );

        let s = scene();
        let spec = PerturbationSpec::default();
        let out = frame_scaling(&s, &spec, &mut seeded_rng(9));
        let before = pairwise(&all_points(&s));
        let after = pairwise(&all_points(&out));
        let ratio = after[0] / before[0];
        assert!((0.8..=1.2).contains(&ratio));
        for (a, b) in before.iter().zip(&after) {
            assert!((b - a * ratio).abs() < 1e-9);
        }
    }

    #[test]
    fn rigid_frame_ops_preserve_distances() {
        let s = scene();
        let before = pairwise(&all_points(&s));
        let spec = PerturbationSpec {
            frame_disp_range: 3.0,
            ..PerturbationSpec::default()
        };
        for out in [
            frame_displacement(&s, &spec, &mut seeded_rng(4)),
            frame_rotation(&s, &spec, &mut seeded_rng(4)),
        ] {
            for (a, b) in before.iter().zip(pairwise(&all_points(&out))) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        let out = frame_displacement(&s, &spec, &mut seeded_rng(4));
        let (a, b) = (s[0].geometry.points()[0], out[0].geometry.points()[0]);
        assert!((b.e - a.e).abs() <= 3.0 && (b.n - a.n).abs() <= 3.0);
    }

    #[test]
    fn apply_is_deterministic_and_ordered() {
        let s = scene();
        let pool = ElementPool::new(s.clone());
        let all: BTreeSet<_> = PerturbationOp::ORDER.into_iter().collect();
        let spec = PerturbationSpec::with_seed(7);
        assert_eq!(apply_seeded(&s, &pool, &spec, &BTreeSet::new()).unwrap(), s);
        let a = apply_seeded(&s, &pool, &spec, &all).unwrap();
        let b = apply_seeded(&s, &pool, &spec, &all).unwrap();
        assert_eq!(a, b);
        let c = apply_seeded(&s, &pool, &PerturbationSpec::with_seed(8), &all).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn op_tags() {
        assert!(
            parse_ops(["frame_rotation", "inst_deletion"])
                .unwrap()
                .len()
                == 2
        );
        assert!(matches!(parse_ops(["frame_shear"]), Err(Error::Config(_))));
        for op in PerturbationOp::ORDER {
            assert_eq!(op.tag().parse::<PerturbationOp>().unwrap(), op);
        }
    }

    #[test]
    fn config_round_trip_and_errors() {
        let spec = PerturbationSpec {
            seed: 99,
            frame_disp_range: 3.0,
            frame_scale_range: (0.9, 1.1),
            ..PerturbationSpec::default()
        };
        assert_eq!(
            PerturbationSpec::from_config_str(&spec.to_config_string()).unwrap(),
            spec
        );
        assert!(PerturbationSpec::from_config_str("seed = 3 # comment\n\n").is_ok());
        assert!(matches!(
            PerturbationSpec::from_config_str("bogus = 1"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            PerturbationSpec::from_config_str("seed = 1\nframe_scale_lo = 2"),
            Err(Error::Config(_))
        ));
        assert!(PerturbationSpec::from_config_str("inst_select_prob = 1.5").is_err());
    }
}
