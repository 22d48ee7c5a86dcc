//! Tile-indexed global map with a temporal layer fed by confident
//! predictions and a static layer holding a (possibly corrupted) HD map.
//!
//! Both layers are keyed by [`TileIndex`], computed by floor division of the
//! UTM coordinates by the tile side `l` (by default the long side of the
//! perception range). Temporal predictions are appended to the tile holding
//! the ego pose. Static vectors are registered under every tile their
//! bounding box overlaps and shared through an [`Arc`], so retrieval can
//! deduplicate them by id.
//!
//! Readers borrow the map immutably and can run concurrently; refresh and
//! ingestion need `&mut GlobalMap`. Wrap the map in an `RwLock` to share it
//! across threads.

mod index;
pub mod interchange;
mod persist;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    ego_to_global, global_to_ego, intersects_range, EgoPose, PerceptionRange, Polyline3,
};

pub use index::{adjacent_tiles, neighbourhood_3x3, tile_index, TileIndex};
pub use persist::{load, read_from, save, write_to, FORMAT_VERSION, MAGIC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapClass {
    Divider,
    PedCrossing,
    Boundary,
}

impl MapClass {
    pub const ALL: [MapClass; 3] = [MapClass::Divider, MapClass::PedCrossing, MapClass::Boundary];

    /// Channel index in heatmaps and the byte code in the map file.
    pub fn index(self) -> usize {
        match self {
            MapClass::Divider => 0,
            MapClass::PedCrossing => 1,
            MapClass::Boundary => 2,
        }
    }

    pub fn from_index(idx: usize) -> Option<Self> {
        Self::ALL.get(idx).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            MapClass::Divider => "divider",
            MapClass::PedCrossing => "ped_crossing",
            MapClass::Boundary => "boundary",
        }
    }
}

impl fmt::Display for MapClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MapClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::config(format!("unknown map class `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Temporal,
    StaticMap,
}

impl FromStr for Layer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "temporal" => Ok(Layer::Temporal),
            "static" | "static_map" | "map" => Ok(Layer::StaticMap),
            other => Err(Error::config(format!("unknown layer `{other}`"))),
        }
    }
}

/// One vectorized map element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapVector {
    pub id: u64,
    pub class: MapClass,
    pub geometry: Polyline3,
    pub confidence: f64,
    pub layer: Layer,
}

impl MapVector {
    pub fn new(
        id: u64,
        class: MapClass,
        geometry: Polyline3,
        confidence: f64,
        layer: Layer,
    ) -> Result<Self> {
        check_confidence(confidence)?;
        Ok(Self {
            id,
            class,
            geometry,
            confidence,
            layer,
        })
    }

    pub fn with_geometry(&self, geometry: Polyline3) -> Self {
        Self {
            geometry,
            ..self.clone()
        }
    }
}

pub(crate) fn check_confidence(c: f64) -> Result<()> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(Error::config(format!(
            "confidence must lie in [0, 1], got {c}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefreshConfig {
    /// Predictions must score strictly above this to be stored.
    pub tau: f64,
}

impl RefreshConfig {
    pub fn new(tau: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&tau) {
            Ok(Self { tau })
        } else {
            Err(Error::config(format!(
                "refresh threshold must lie in [0, 1], got {tau}"
            )))
        }
    }
}

impl Default for RefreshConfig {
    /// Inference threshold of the best-performing setting.
    fn default() -> Self {
        Self { tau: 0.8 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalOptions {
    /// Scan the full 3x3 block around the target tile instead of the
    /// midline-based adjacency. Closes the gap left by rotated range corners
    /// reaching past `l / 2`.
    pub strict_3x3: bool,
}

pub type Tiles = BTreeMap<TileIndex, Vec<Arc<MapVector>>>;

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalMap {
    tile_side: f64,
    temporal: Tiles,
    static_map: Tiles,
    next_temporal_id: u64,
}

impl GlobalMap {
    pub fn new(tile_side: f64) -> Result<Self> {
        index::check_tile_side(tile_side)?;
        Ok(Self {
            tile_side,
            temporal: Tiles::new(),
            static_map: Tiles::new(),
            next_temporal_id: 0,
        })
    }

    /// Tiles as wide as the long side of `range`.
    pub fn for_range(range: &PerceptionRange) -> Result<Self> {
        range.validate()?;
        Self::new(range.long_side())
    }

    pub fn tile_side(&self) -> f64 {
        self.tile_side
    }

    pub fn layer(&self, layer: Layer) -> &Tiles {
        match layer {
            Layer::Temporal => &self.temporal,
            Layer::StaticMap => &self.static_map,
        }
    }

    fn layer_mut(&mut self, layer: Layer) -> &mut Tiles {
        match layer {
            Layer::Temporal => &mut self.temporal,
            Layer::StaticMap => &mut self.static_map,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.temporal.is_empty() && self.static_map.is_empty()
    }

    /// Number of distinct vector ids stored in a layer.
    pub fn vector_count(&self, layer: Layer) -> usize {
        self.layer(layer)
            .values()
            .flatten()
            .map(|v| v.id)
            .collect::<HashSet<_>>()
            .len()
    }

    pub fn tile_index_of(&self, pose: &EgoPose) -> TileIndex {
        TileIndex::new(
            index::axis_index(pose.utm_e, self.tile_side),
            index::axis_index(pose.utm_n, self.tile_side),
        )
    }

    /// Stores every ego-frame prediction scoring strictly above `cfg.tau`
    /// under the tile containing the ego pose. Stored vectors receive fresh
    /// temporal ids so repeated observations of one element never collide.
    /// Returns the ids assigned, in input order.
    pub fn refresh(
        &mut self,
        predictions: &[MapVector],
        pose: &EgoPose,
        cfg: &RefreshConfig,
    ) -> Vec<u64> {
        let tile = self.tile_index_of(pose);
        let mut assigned = Vec::new();
        let mut fresh = Vec::new();
        for pred in predictions.iter().filter(|p| p.confidence > cfg.tau) {
            let id = self.next_temporal_id;
            self.next_temporal_id += 1;
            fresh.push(Arc::new(MapVector {
                id,
                class: pred.class,
                geometry: ego_to_global(&pred.geometry, pose),
                confidence: pred.confidence,
                layer: Layer::Temporal,
            }));
            assigned.push(id);
        }
        if !fresh.is_empty() {
            self.temporal.entry(tile).or_default().extend(fresh);
        }
        assigned
    }

    /// Registers global-frame vectors under every tile their bounding box
    /// overlaps. A vector already present in a tile under the same id is
    /// replaced.
    pub fn ingest_static(&mut self, vectors: impl IntoIterator<Item = MapVector>) {
        let l = self.tile_side;
        for mut v in vectors {
            v.layer = Layer::StaticMap;
            let (min_e, min_n, max_e, max_n) = v.geometry.bounds();
            let shared = Arc::new(v);
            for i in index::axis_index(min_e, l)..=index::axis_index(max_e, l) {
                for j in index::axis_index(min_n, l)..=index::axis_index(max_n, l) {
                    let tile = self.static_map.entry(TileIndex::new(i, j)).or_default();
                    match tile.iter_mut().find(|existing| existing.id == shared.id) {
                        Some(slot) => *slot = Arc::clone(&shared),
                        None => tile.push(Arc::clone(&shared)),
                    }
                }
            }
        }
    }

    /// Drops static tiles rejected by `keep`.
    pub fn retain_static_tiles(&mut self, mut keep: impl FnMut(&TileIndex) -> bool) {
        self.static_map.retain(|t, _| keep(t));
    }

    pub fn clear_layer(&mut self, layer: Layer) {
        self.layer_mut(layer).clear();
        if layer == Layer::Temporal {
            self.next_temporal_id = 0;
        }
    }

    /// Tiles scanned for a pose: the adjacency set, or the 3x3 block in strict mode.
    pub fn query_tiles(&self, pose: &EgoPose, opts: RetrievalOptions) -> Vec<TileIndex> {
        let f = if opts.strict_3x3 {
            neighbourhood_3x3
        } else {
            adjacent_tiles
        };
        f(pose.utm_e, pose.utm_n, self.tile_side).expect("tile side validated at construction")
    }

    /// Vectors of `layer` that touch the perception range, in the ego frame,
    /// deduplicated and sorted by id.
    pub fn retrieve(
        &self,
        layer: Layer,
        pose: &EgoPose,
        range: &PerceptionRange,
        opts: RetrievalOptions,
    ) -> Vec<MapVector> {
        let tiles = self.layer(layer);
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for tile in self.query_tiles(pose, opts) {
            let Some(vectors) = tiles.get(&tile) else {
                continue;
            };
            for v in vectors {
                if !seen.insert(v.id) {
                    continue;
                }
                let local = global_to_ego(&v.geometry, pose);
                if intersects_range(&local, range) {
                    out.push(v.with_geometry(local));
                }
            }
        }
        out.sort_by_key(|v| v.id);
        out
    }

    pub(crate) fn from_parts(tile_side: f64, temporal: Tiles, static_map: Tiles) -> Result<Self> {
        index::check_tile_side(tile_side)?;
        let next_temporal_id = temporal
            .values()
            .flatten()
            .map(|v| v.id + 1)
            .max()
            .unwrap_or(0);
        Ok(Self {
            tile_side,
            temporal,
            static_map,
            next_temporal_id,
        })
    }
}
