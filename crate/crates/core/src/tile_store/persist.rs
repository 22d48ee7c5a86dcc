//! Binary global-map container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        4 bytes  "UPPM"
//! version      u16      currently 1
//! tile_side    f64
//! layer x2     temporal first, then static map:
//!   tile_count   u64
//!   per tile:    i i64, j i64, vector_count u32
//!     per vector: id u64, class u8, confidence f64, point_count u32,
//!                 point_count x (e f64, n f64, z f64)
//! ```
//!
//! Static vectors spanning several tiles are written once per tile and
//! re-shared by id when loaded.

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use super::{check_confidence, GlobalMap, Layer, MapClass, MapVector, TileIndex, Tiles};
use crate::error::{Error, Result};
use crate::geometry::{Point3, Polyline3};

pub const MAGIC: [u8; 4] = *b"UPPM";
pub const FORMAT_VERSION: u16 = 1;

pub fn write_to<W: Write>(map: &GlobalMap, mut w: W) -> io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&map.tile_side().to_le_bytes())?;
    for layer in [Layer::Temporal, Layer::StaticMap] {
        let tiles = map.layer(layer);
        w.write_all(&(tiles.len() as u64).to_le_bytes())?;
        for (tile, vectors) in tiles {
            w.write_all(&tile.i.to_le_bytes())?;
            w.write_all(&tile.j.to_le_bytes())?;
            w.write_all(&(vectors.len() as u32).to_le_bytes())?;
            for v in vectors {
                w.write_all(&v.id.to_le_bytes())?;
                w.write_all(&[v.class.index() as u8])?;
                w.write_all(&v.confidence.to_le_bytes())?;
                let pts = v.geometry.points();
                w.write_all(&(pts.len() as u32).to_le_bytes())?;
                for p in pts {
                    w.write_all(&p.e.to_le_bytes())?;
                    w.write_all(&p.n.to_le_bytes())?;
                    w.write_all(&p.z.to_le_bytes())?;
                }
            }
        }
    }
    w.flush()
}

pub fn save(map: &GlobalMap, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path)?;
    write_to(map, BufWriter::new(file))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<GlobalMap> {
    let bytes = fs::read(path)?;
    read_from(&bytes)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn fail<T>(&self, at: usize, reason: impl Into<String>) -> Result<T> {
        Err(Error::Decode {
            offset: at as u64,
            reason: reason.into(),
        })
    }

    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        match self.buf.get(self.pos..self.pos + N) {
            Some(bytes) => {
                self.pos += N;
                Ok(bytes.try_into().expect("slice of length N"))
            }
            None => self.fail(self.pos, format!("unexpected end of file reading {what}")),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take::<1>(what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(what)?))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(what)?))
    }

    fn i64(&mut self, what: &str) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(what)?))
    }
}

/// Decodes a whole container. Any structural problem yields
/// [`Error::Decode`] with the byte offset of the offending field.
pub fn read_from(bytes: &[u8]) -> Result<GlobalMap> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take::<4>("magic")? != MAGIC {
        return c.fail(0, "bad magic, expected UPPM");
    }
    let version = c.u16("version")?;
    if version != FORMAT_VERSION {
        return c.fail(4, format!("unsupported version {version}"));
    }
    let side_at = c.pos;
    let tile_side = c.f64("tile side")?;
    if !(tile_side.is_finite() && tile_side > 0.0) {
        return c.fail(side_at, format!("invalid tile side {tile_side}"));
    }

    let temporal = read_layer(&mut c, Layer::Temporal)?;
    let static_map = read_layer(&mut c, Layer::StaticMap)?;
    if c.pos != bytes.len() {
        return c.fail(c.pos, format!("{} trailing bytes", bytes.len() - c.pos));
    }
    GlobalMap::from_parts(tile_side, temporal, static_map)
}

fn read_layer(c: &mut Cursor<'_>, layer: Layer) -> Result<Tiles> {
    let mut tiles = Tiles::new();
    let mut shared: HashMap<u64, Arc<MapVector>> = HashMap::new();
    let tile_count = c.u64("tile count")?;
    for _ in 0..tile_count {
        let tile_at = c.pos;
        let tile = TileIndex::new(c.i64("tile i")?, c.i64("tile j")?);
        let count = c.u32("vector count")?;
        let mut vectors = Vec::with_capacity(count.min(1 << 16) as usize);
        for _ in 0..count {
            let v = read_vector(c, layer)?;
            let v = match shared.get(&v.id) {
                Some(existing) if **existing == v => Arc::clone(existing),
                _ => {
                    let arc = Arc::new(v);
                    shared.insert(arc.id, Arc::clone(&arc));
                    arc
                }
            };
            vectors.push(v);
        }
        if tiles.insert(tile, vectors).is_some() {
            return c.fail(tile_at, format!("duplicate tile ({}, {})", tile.i, tile.j));
        }
    }
    Ok(tiles)
}

fn read_vector(c: &mut Cursor<'_>, layer: Layer) -> Result<MapVector> {
    let id = c.u64("vector id")?;
    let class_at = c.pos;
    let class_code = c.u8("class")?;
    let Some(class) = MapClass::from_index(class_code as usize) else {
        return c.fail(class_at, format!("unknown class code {class_code}"));
    };
    let conf_at = c.pos;
    let confidence = c.f64("confidence")?;
    if check_confidence(confidence).is_err() {
        return c.fail(conf_at, format!("confidence {confidence} outside [0, 1]"));
    }
    let pts_at = c.pos;
    let n = c.u32("point count")? as usize;
    // each point needs 24 bytes; reject counts the buffer cannot hold before allocating
    if n.saturating_mul(24) > c.buf.len().saturating_sub(c.pos) {
        return c.fail(c.pos, format!("unexpected end of file reading {n} points"));
    }
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        points.push(Point3::new(c.f64("e")?, c.f64("n")?, c.f64("z")?));
    }
    let geometry = match Polyline3::new(points) {
        Ok(g) => g,
        Err(e) => return c.fail(pts_at, e.to_string()),
    };
    Ok(MapVector {
        id,
        class,
        geometry,
        confidence,
        layer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EgoPose;
    use crate::tile_store::RefreshConfig;

    fn sample_map() -> GlobalMap {
        let mut map = GlobalMap::new(60.0).unwrap();
        let geom = Polyline3::new(vec![
            Point3::new(50.0, -5.0, 1.0),
            Point3::new(75.0, 3.0, 1.5),
        ])
        .unwrap();
        map.ingest_static([MapVector::new(
            42,
            MapClass::Boundary,
            geom.clone(),
            1.0,
            Layer::StaticMap,
        )
        .unwrap()]);
        let pred = MapVector::new(0, MapClass::PedCrossing, geom, 0.9, Layer::Temporal).unwrap();
        map.refresh(
            &[pred],
            &EgoPose::new(-10.0, 20.0, 0.0, 0.3).unwrap(),
            &RefreshConfig::default(),
        );
        map
    }

    fn encode(map: &GlobalMap) -> Vec<u8> {
        let mut buf = Vec::new();
        write_to(map, &mut buf).unwrap();
        buf
    }

    #[test]
    fn empty_map_round_trips() {
        let map = GlobalMap::new(60.0).unwrap();
        let bytes = encode(&map);
        assert_eq!(bytes.len(), 4 + 2 + 8 + 8 + 8);
        assert_eq!(read_from(&bytes).unwrap(), map);
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&GlobalMap::new(60.0).unwrap());
        assert_eq!(&bytes[..4], b"UPPM");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..14], &60.0f64.to_le_bytes());
    }

    #[test]
    fn populated_map_round_trips_and_reshares() {
        let map = sample_map();
        let back = read_from(&encode(&map)).unwrap();
        assert_eq!(back, map);
        let tiles = back.layer(Layer::StaticMap);
        let a = &tiles[&TileIndex::new(0, -1)][0];
        let b = &tiles[&TileIndex::new(1, 0)][0];
        assert!(Arc::ptr_eq(a, b));
    }

    #[test]
    fn every_truncation_is_an_error() {
        let bytes = encode(&sample_map());
        for cut in 0..bytes.len() {
            match read_from(&bytes[..cut]) {
                Err(Error::Decode { offset, .. }) => assert!(offset as usize <= cut),
                other => panic!("truncation at {cut} gave {other:?}"),
            }
        }
    }

    #[test]
    fn corrupt_fields_report_offsets() {
        let mut bytes = encode(&sample_map());
        bytes[0] = b'X';
        assert!(matches!(
            read_from(&bytes),
            Err(Error::Decode { offset: 0, .. })
        ));

        let mut bytes = encode(&sample_map());
        bytes[4] = 9;
        assert!(matches!(
            read_from(&bytes),
            Err(Error::Decode { offset: 4, .. })
        ));

        let mut bytes = encode(&sample_map());
        bytes.push(0);
        let len = bytes.len() as u64;
        assert!(
            matches!(read_from(&bytes), Err(Error::Decode { offset, .. }) if offset == len - 1)
        );

        // class byte of the first temporal vector: header 14 + tile count 8 + tile 20 + id 8
        let mut bytes = encode(&sample_map());
        bytes[50] = 7;
        assert!(matches!(
            read_from(&bytes),
            Err(Error::Decode { offset: 50, .. })
        ));
    }

    #[test]
    fn load_missing_file_is_io_error() {
        assert!(matches!(
            load("/nonexistent/dir/map.uppm"),
            Err(Error::Io(_))
        ));
    }
}
