//! Frames, polylines and the ego-centred perception rectangle.
//!
//! Conventions used across the crate:
//!
//! * Global coordinates are planar UTM metres `(e, n)` plus elevation `z`.
//! * The ego frame has `x` pointing forward and `y` pointing left; the same
//!   [`Point3`] type is reused with `e = x`, `n = y`.
//! * Yaw is counter-clockwise positive with zero along UTM east.
//! * Transforms are planar rigid motions. Elevation is translated by the pose
//!   height and never rotated.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, GeometryError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub e: f64,
    pub n: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(e: f64, n: f64, z: f64) -> Self {
        Self { e, n, z }
    }

    pub fn is_finite(&self) -> bool {
        self.e.is_finite() && self.n.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (de, dn, dz) = (self.e - other.e, self.n - other.n, self.z - other.z);
        (de * de + dn * dn + dz * dz).sqrt()
    }

    pub fn planar_distance(&self, other: &Point3) -> f64 {
        (self.e - other.e).hypot(self.n - other.n)
    }

    fn lerp(&self, other: &Point3, t: f64) -> Point3 {
        Point3 {
            e: self.e + (other.e - self.e) * t,
            n: self.n + (other.n - self.n) * t,
            z: self.z + (other.z - self.z) * t,
        }
    }
}

/// An ordered list of at least two points with no consecutive repeats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polyline3 {
    points: Vec<Point3>,
}

impl Polyline3 {
    pub fn new(points: Vec<Point3>) -> Result<Self, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::TooFewPoints(points.len()));
        }
        for (idx, p) in points.iter().enumerate() {
            if !p.is_finite() {
                return Err(GeometryError::NonFinite(idx));
            }
        }
        for (idx, pair) in points.windows(2).enumerate() {
            if pair[0] == pair[1] {
                return Err(GeometryError::DuplicatePoint(idx + 1));
            }
        }
        Ok(Self { points })
    }

    /// Used by transforms that cannot create repeats (rigid motions, scaling by s > 0).
    pub(crate) fn from_points_unchecked(points: Vec<Point3>) -> Self {
        debug_assert!(points.len() >= 2);
        Self { points }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn segments(&self) -> impl Iterator<Item = (&Point3, &Point3)> + '_ {
        self.points.windows(2).map(|w| (&w[0], &w[1]))
    }

    pub fn arc_length(&self) -> f64 {
        self.segments().map(|(a, b)| a.distance(b)).sum()
    }

    pub fn mean_z(&self) -> f64 {
        self.points.iter().map(|p| p.z).sum::<f64>() / self.points.len() as f64
    }

    /// Vertex centroid in the plane.
    pub fn centroid(&self) -> (f64, f64) {
        let n = self.points.len() as f64;
        let (se, sn) = self
            .points
            .iter()
            .fold((0.0, 0.0), |(se, sn), p| (se + p.e, sn + p.n));
        (se / n, sn / n)
    }

    /// Planar axis-aligned bounds `(min_e, min_n, max_e, max_n)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.points.iter().fold(
            (
                f64::INFINITY,
                f64::INFINITY,
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
            ),
            |(a, b, c, d), p| (a.min(p.e), b.min(p.n), c.max(p.e), d.max(p.n)),
        )
    }

    pub fn translated(&self, de: f64, dn: f64) -> Self {
        self.map_points(|p| Point3::new(p.e + de, p.n + dn, p.z))
    }

    /// Rotation by `theta` radians about the planar origin.
    pub fn rotated(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        self.map_points(|p| Point3::new(c * p.e - s * p.n, s * p.e + c * p.n, p.z))
    }

    /// Planar scaling about the origin; `z` is left alone.
    pub fn scaled(&self, factor: f64) -> Self {
        self.map_points(|p| Point3::new(p.e * factor, p.n * factor, p.z))
    }

    pub(crate) fn map_points(&self, f: impl Fn(&Point3) -> Point3) -> Self {
        Self::from_points_unchecked(self.points.iter().map(f).collect())
    }

    /// `n_pts` points spaced evenly by 3D arc length; both endpoints kept.
    pub fn resample(&self, n_pts: usize) -> Result<Polyline3, GeometryError> {
        if n_pts < 2 {
            return Err(GeometryError::ResampleCount(n_pts));
        }
        let seg_len: Vec<f64> = self.segments().map(|(a, b)| a.distance(b)).collect();
        let total: f64 = seg_len.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(GeometryError::ZeroLength);
        }

        let last = *self.points.last().expect("non-empty");
        let mut out = Vec::with_capacity(n_pts);
        out.push(self.points[0]);
        let mut seg = 0;
        let mut seg_start = 0.0;
        for k in 1..n_pts - 1 {
            let target = total * k as f64 / (n_pts - 1) as f64;
            while seg + 1 < seg_len.len() && seg_start + seg_len[seg] < target {
                seg_start += seg_len[seg];
                seg += 1;
            }
            let t = if seg_len[seg] > 0.0 {
                ((target - seg_start) / seg_len[seg]).clamp(0.0, 1.0)
            } else {
                0.0
            };
            out.push(self.points[seg].lerp(&self.points[seg + 1], t));
        }
        out.push(last);
        Ok(Polyline3::from_points_unchecked(out))
    }
}

impl<'de> Deserialize<'de> for Polyline3 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            points: Vec<Point3>,
        }
        let raw = Raw::deserialize(d)?;
        Polyline3::new(raw.points).map_err(serde::de::Error::custom)
    }
}

/// Wrap an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped >= PI {
        -PI
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoPose {
    pub utm_e: f64,
    pub utm_n: f64,
    pub z: f64,
    /// Counter-clockwise from UTM east, in `[-pi, pi)`.
    pub yaw: f64,
}

impl EgoPose {
    pub fn new(utm_e: f64, utm_n: f64, z: f64, yaw: f64) -> Result<Self> {
        if !(utm_e.is_finite() && utm_n.is_finite() && z.is_finite() && yaw.is_finite()) {
            return Err(Error::config("ego pose must be finite"));
        }
        Ok(Self {
            utm_e,
            utm_n,
            z,
            yaw: wrap_angle(yaw),
        })
    }

    pub fn identity() -> Self {
        Self {
            utm_e: 0.0,
            utm_n: 0.0,
            z: 0.0,
            yaw: 0.0,
        }
    }

    pub fn point_to_global(&self, p: &Point3) -> Point3 {
        let (s, c) = self.yaw.sin_cos();
        Point3 {
            e: self.utm_e + c * p.e - s * p.n,
            n: self.utm_n + s * p.e + c * p.n,
            z: self.z + p.z,
        }
    }

    pub fn point_to_ego(&self, p: &Point3) -> Point3 {
        let (s, c) = self.yaw.sin_cos();
        let (de, dn) = (p.e - self.utm_e, p.n - self.utm_n);
        Point3 {
            e: c * de + s * dn,
            n: -s * de + c * dn,
            z: p.z - self.z,
        }
    }
}

pub fn ego_to_global(poly: &Polyline3, pose: &EgoPose) -> Polyline3 {
    poly.map_points(|p| pose.point_to_global(p))
}

pub fn global_to_ego(poly: &Polyline3, pose: &EgoPose) -> Polyline3 {
    poly.map_points(|p| pose.point_to_ego(p))
}

/// Ego-centred rectangle `[-rear, front] x [-right, left]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerceptionRange {
    pub front: f64,
    pub rear: f64,
    pub left: f64,
    pub right: f64,
}

impl Default for PerceptionRange {
    fn default() -> Self {
        Self {
            front: 30.0,
            rear: 30.0,
            left: 15.0,
            right: 15.0,
        }
    }
}

impl PerceptionRange {
    pub fn new(front: f64, rear: f64, left: f64, right: f64) -> Result<Self> {
        let r = Self {
            front,
            rear,
            left,
            right,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.front, self.rear, self.left, self.right];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::config(format!(
                "perception range extents must be positive, got {self:?}"
            )))
        }
    }

    pub fn long_side(&self) -> f64 {
        self.front + self.rear
    }

    pub fn short_side(&self) -> f64 {
        self.left + self.right
    }

    /// Distance from the ego origin to the farthest corner.
    pub fn corner_radius(&self) -> f64 {
        self.front.max(self.rear).hypot(self.left.max(self.right))
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= -self.rear && x <= self.front && y >= -self.right && y <= self.left
    }

    /// Closed segment / closed rectangle test (Liang-Barsky clipping).
    pub fn segment_intersects(&self, a: &Point3, b: &Point3) -> bool {
        let (dx, dy) = (b.e - a.e, b.n - a.n);
        let mut t0: f64 = 0.0;
        let mut t1: f64 = 1.0;
        let edges = [
            (-dx, a.e + self.rear),
            (dx, self.front - a.e),
            (-dy, a.n + self.right),
            (dy, self.left - a.n),
        ];
        for (p, q) in edges {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }
}

/// True iff some segment of an ego-frame polyline touches the perception rectangle.
pub fn intersects_range(poly: &Polyline3, range: &PerceptionRange) -> bool {
    poly.segments().any(|(a, b)| range.segment_intersects(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(pts: &[(f64, f64, f64)]) -> Polyline3 {
        Polyline3::new(pts.iter().map(|&(e, n, z)| Point3::new(e, n, z)).collect()).unwrap()
    }

    #[test]
    fn rejects_bad_polylines() {
        assert_eq!(
            Polyline3::new(vec![Point3::default()]),
            Err(GeometryError::TooFewPoints(1))
        );
        assert_eq!(
            Polyline3::new(vec![Point3::default(), Point3::default()]),
            Err(GeometryError::DuplicatePoint(1))
        );
        assert_eq!(
            Polyline3::new(vec![Point3::default(), Point3::new(f64::NAN, 0.0, 0.0)]),
            Err(GeometryError::NonFinite(1))
        );
    }

    #[test]
    fn identity_pose_is_identity() {
        let p = line(&[(1.0, 2.0, 3.0), (-4.0, 5.0, -6.0)]);
        assert_eq!(ego_to_global(&p, &EgoPose::identity()), p);
        assert_eq!(global_to_ego(&p, &EgoPose::identity()), p);
    }

    #[test]
    fn quarter_turn_example() {
        let pose = EgoPose::new(100.0, 200.0, 0.0, PI / 2.0).unwrap();
        let g = pose.point_to_global(&Point3::new(1.0, 0.0, 0.0));
        assert!((g.e - 100.0).abs() < 1e-12);
        assert!((g.n - 201.0).abs() < 1e-12);
        assert_eq!(g.z, 0.0);

        let back = pose.point_to_ego(&Point3::new(100.0, 201.0, 0.0));
        assert!((back.e - 1.0).abs() < 1e-12);
        assert!(back.n.abs() < 1e-12);
    }

    #[test]
    fn z_is_translated_not_rotated() {
        let pose = EgoPose::new(0.0, 0.0, 12.5, 1.0).unwrap();
        let g = pose.point_to_global(&Point3::new(3.0, 4.0, 1.0));
        assert_eq!(g.z, 13.5);
    }

    #[test]
    fn wrap_angle_half_open() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(-PI), -PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        let w = wrap_angle(PI - 1e-9);
        assert!(w < PI && w > 3.0);
    }

    #[test]
    fn range_examples() {
        let r = PerceptionRange::default();
        assert!(intersects_range(
            &line(&[(-1.0, -1.0, 0.0), (1.0, 1.0, 0.0)]),
            &r
        ));
        assert!(!intersects_range(
            &line(&[(100.0, -5.0, 0.0), (100.0, 5.0, 0.0)]),
            &r
        ));
        // crosses the box with both vertices outside
        assert!(intersects_range(
            &line(&[(40.0, 0.0, 0.0), (-40.0, 0.0, 0.0)]),
            &r
        ));
        // closed boundary
        assert!(intersects_range(
            &line(&[(30.0, 20.0, 0.0), (30.0, 15.0, 0.0)]),
            &r
        ));
        assert!(!intersects_range(
            &line(&[(30.0 + 1e-9, 20.0, 0.0), (30.0 + 1e-9, -20.0, 0.0)]),
            &r
        ));
    }

    #[test]
    fn range_validation() {
        assert!(PerceptionRange::new(30.0, 30.0, 15.0, 0.0).is_err());
        assert_eq!(PerceptionRange::default().long_side(), 60.0);
    }

    #[test]
    fn resample_straight_segment() {
        let p = line(&[(0.0, 0.0, 0.0), (10.0, 0.0, 0.0)]);
        let r = p.resample(3).unwrap();
        let es: Vec<f64> = r.points().iter().map(|q| q.e).collect();
        assert_eq!(es, vec![0.0, 5.0, 10.0]);
        assert!(matches!(
            p.resample(1),
            Err(GeometryError::ResampleCount(1))
        ));
    }

    #[test]
    fn resample_equidistant_is_identity() {
        let p = line(&[
            (0.0, 0.0, 0.0),
            (1.0, 0.0, 0.0),
            (1.0, 1.0, 0.0),
            (2.0, 1.0, 0.0),
        ]);
        let r = p.resample(4).unwrap();
        for (a, b) in p.points().iter().zip(r.points()) {
            assert!(a.distance(b) < 1e-12);
        }
    }

    fn arb_pose() -> impl Strategy<Value = EgoPose> {
        (
            -1.0e6..1.0e6f64,
            -1.0e6..1.0e6f64,
            -100.0..100.0f64,
            -PI..PI,
        )
            .prop_map(|(e, n, z, yaw)| EgoPose::new(e, n, z, yaw).unwrap())
    }

    fn arb_polyline() -> impl Strategy<Value = Polyline3> {
        prop::collection::vec((-200.0..200.0f64, -200.0..200.0f64, -10.0..10.0f64), 2..12)
            .prop_filter_map("distinct consecutive points", |pts| {
                Polyline3::new(
                    pts.into_iter()
                        .map(|(e, n, z)| Point3::new(e, n, z))
                        .collect(),
                )
                .ok()
            })
    }

    // strictly increasing `e` keeps the arc-length parametrisation unambiguous
    fn arb_monotone_polyline() -> impl Strategy<Value = Polyline3> {
        prop::collection::vec((0.1..20.0f64, -50.0..50.0f64, -5.0..5.0f64), 1..12).prop_map(
            |steps| {
                let mut e = 0.0;
                let mut pts = vec![Point3::new(0.0, 0.0, 0.0)];
                for (de, n, z) in steps {
                    e += de;
                    pts.push(Point3::new(e, n, z));
                }
                Polyline3::new(pts).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn transform_round_trip(poly in arb_polyline(), pose in arb_pose()) {
            let back = global_to_ego(&ego_to_global(&poly, &pose), &pose);
            for (a, b) in poly.points().iter().zip(back.points()) {
                prop_assert!(a.distance(b) < 1e-9);
            }
            let fwd = ego_to_global(&global_to_ego(&poly, &pose), &pose);
            for (a, b) in poly.points().iter().zip(fwd.points()) {
                prop_assert!(a.distance(b) < 1e-9);
            }
        }

        #[test]
        fn transform_is_rigid(poly in arb_polyline(), pose in arb_pose()) {
            let g = ego_to_global(&poly, &pose);
            let pts = poly.points();
            let gp = g.points();
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    prop_assert!((pts[i].distance(&pts[j]) - gp[i].distance(&gp[j])).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn resample_keeps_length_and_spacing(poly in arb_monotone_polyline(), n in 2usize..50) {
            let r = poly.resample(n).unwrap();
            prop_assert_eq!(r.len(), n);
            prop_assert_eq!(r.points()[0], poly.points()[0]);
            prop_assert_eq!(r.points()[n - 1], *poly.points().last().unwrap());

            // arc-length position of every resampled point along the source polyline
            let total = poly.arc_length();
            let positions: Vec<f64> = r.points().iter().map(|q| arc_position(&poly, q)).collect();
            let gap = total / (n - 1) as f64;
            for w in positions.windows(2) {
                prop_assert!((w[1] - w[0] - gap).abs() < 1e-9 * total.max(1.0));
            }
        }

        #[test]
        fn range_test_matches_dense_sampling(
            a in (-80.0..80.0f64, -50.0..50.0f64),
            b in (-80.0..80.0f64, -50.0..50.0f64),
        ) {
            let range = PerceptionRange::default();
            let p = Point3::new(a.0, a.1, 0.0);
            let q = Point3::new(b.0, b.1, 0.0);
            prop_assume!(p != q);
            let fast = range.segment_intersects(&p, &q);
            let samples = 10_000;
            let dense = (0..=samples).any(|k| {
                let t = k as f64 / samples as f64;
                range.contains(p.e + (q.e - p.e) * t, p.n + (q.n - p.n) * t)
            });
            // sampling can only miss grazing contacts, never invent one
            if dense {
                prop_assert!(fast);
            }
            if fast && !dense {
                // a miss is only allowed when the contact is shorter than the sample step
                let step = p.planar_distance(&q) / samples as f64;
                let near = (0..=samples).any(|k| {
                    let t = k as f64 / samples as f64;
                    let (x, y) = (p.e + (q.e - p.e) * t, p.n + (q.n - p.n) * t);
                    let dx = (x - range.front).max(-range.rear - x).max(0.0);
                    let dy = (y - range.left).max(-range.right - y).max(0.0);
                    dx.hypot(dy) <= step
                });
                prop_assert!(near);
            }
        }
    }

    /// Arc-length coordinate of a point lying on the polyline.
    fn arc_position(poly: &Polyline3, q: &Point3) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        let mut start = 0.0;
        for (a, b) in poly.segments() {
            let len = a.distance(b);
            let t = (((q.e - a.e) * (b.e - a.e)
                + (q.n - a.n) * (b.n - a.n)
                + (q.z - a.z) * (b.z - a.z))
                / (len * len))
                .clamp(0.0, 1.0);
            let d = a.lerp(b, t).distance(q);
            if d < best.0 {
                best = (d, start + t * len);
            }
            start += len;
        }
        best.1
    }
}
