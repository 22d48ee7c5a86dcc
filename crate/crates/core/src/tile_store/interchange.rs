//! Line-oriented text format for exchanging vector maps.
//!
//! One vector per line, whitespace separated:
//!
//! ```text
//! <id> <class> <confidence> <e0> <n0> <z0> <e1> <n1> <z1> ...
//! ```
//!
//! `class` is one of `divider`, `ped_crossing`, `boundary`. Blank lines and
//! lines starting with `#` are ignored. Floats are written in shortest
//! round-trip form, so write/read is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Layer, MapVector};
use crate::error::{Error, Result};
use crate::geometry::{Point3, Polyline3};

pub fn parse(text: &str, layer: Layer) -> Result<Vec<MapVector>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 + 6 {
            return Err(Error::parse(
                line_no,
                "expected id, class, confidence and at least two points",
            ));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad id `{}`", fields[0])))?;
        let class = fields[1]
            .parse()
            .map_err(|e: Error| Error::parse(line_no, e.to_string()))?;
        let confidence: f64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad confidence `{}`", fields[2])))?;
        let coords = &fields[3..];
        if !coords.len().is_multiple_of(3) {
            return Err(Error::parse(
                line_no,
                format!("{} coordinates is not a multiple of 3", coords.len()),
            ));
        }
        let mut points = Vec::with_capacity(coords.len() / 3);
        for triple in coords.chunks(3) {
            let mut xyz = [0.0; 3];
            for (slot, s) in xyz.iter_mut().zip(triple) {
                *slot = s
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("bad coordinate `{s}`")))?;
            }
            points.push(Point3::new(xyz[0], xyz[1], xyz[2]));
        }
        let geometry = Polyline3::new(points).map_err(|e| Error::parse(line_no, e.to_string()))?;
        let v = MapVector::new(id, class, geometry, confidence, layer)
            .map_err(|e| Error::parse(line_no, e.to_string()))?;
        out.push(v);
    }
    Ok(out)
}

pub fn format(vectors: &[MapVector]) -> String {
    let mut s = String::from("# id class confidence e n z ...\n");
    for v in vectors {
        let _ = write!(s, "{} {} {}", v.id, v.class, v.confidence);
        for p in v.geometry.points() {
            let _ = write!(s, " {} {} {}", p.e, p.n, p.z);
        }
        s.push('\n');
    }
    s
}

pub fn read(path: impl AsRef<Path>, layer: Layer) -> Result<Vec<MapVector>> {
    parse(&fs::read_to_string(path)?, layer)
}

pub fn write(path: impl AsRef<Path>, vectors: &[MapVector]) -> Result<()> {
    fs::write(path, format(vectors))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tile_store::MapClass;
    use proptest::prelude::*;

    #[test]
    fn parses_records_and_skips_comments() {
        let text = "# header\n\n7 divider 0.5 0 0 0 1 0.25 -2\n8 boundary 1 5 5 5 6 6 6 7 7 7\n";
        let v = parse(text, Layer::StaticMap).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].id, 7);
        assert_eq!(v[0].class, MapClass::Divider);
        assert_eq!(v[0].geometry.points()[1], Point3::new(1.0, 0.25, -2.0));
        assert_eq!(v[1].geometry.len(), 3);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = [
            ("1 divider 0.5 0 0 0 1 1", 1),
            ("\n1 lane 0.5 0 0 0 1 1 1", 2),
            ("1 divider 2.0 0 0 0 1 1 1", 1),
            ("x divider 0.5 0 0 0 1 1 1", 1),
            ("1 divider 0.5 0 0 0 0 0 0", 1),
            ("1 divider 0.5 0 0 0 1 1 q", 1),
        ];
        for (text, line) in bad {
            match parse(text, Layer::StaticMap) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    proptest! {
        #[test]
        fn format_parse_is_lossless(
            id in any::<u64>(),
            conf in 0.0..=1.0f64,
            pts in prop::collection::vec((-1e6..1e6f64, -1e6..1e6f64, -1e3..1e3f64), 2..8),
        ) {
            let points: Vec<Point3> = pts.into_iter().map(|(e, n, z)| Point3::new(e, n, z)).collect();
            prop_assume!(points.windows(2).all(|w| w[0] != w[1]));
            let v = MapVector::new(id, MapClass::PedCrossing, Polyline3::new(points).unwrap(), conf, Layer::Temporal).unwrap();
            let back = parse(&format(std::slice::from_ref(&v)), Layer::Temporal).unwrap();
            prop_assert_eq!(back, vec![v]);
        }
    }
}
