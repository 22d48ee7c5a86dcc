//! Ingest a synthetic town, then pull the ego-frame vectors around a few
//! poses along its route.

use priormap::geometry::PerceptionRange;
use priormap::sim::{generate_world, WorldSpec};
use priormap::tile_store::{GlobalMap, Layer, RetrievalOptions};

fn main() -> priormap::Result<()> {
    let world = generate_world(&WorldSpec::default())?;
    let range = PerceptionRange::default();
    let mut map = GlobalMap::for_range(&range)?;
    map.ingest_static(world.vectors.iter().cloned());
    println!(
        "{} vectors in {} tiles of {} m",
        world.vectors.len(),
        map.layer(Layer::StaticMap).len(),
        map.tile_side()
    );

    for pose in world.trajectory(1.0, 400).iter().step_by(100) {
        let tiles = map.query_tiles(pose, RetrievalOptions::default());
        let found = map.retrieve(Layer::StaticMap, pose, &range, RetrievalOptions::default());
        let strict = map.retrieve(
            Layer::StaticMap,
            pose,
            &range,
            RetrievalOptions { strict_3x3: true },
        );
        println!(
            "pose ({:.1}, {:.1}) yaw {:+.2}: tile {:?}, {} tiles queried, {} vectors ({} with 3x3)",
            pose.utm_e,
            pose.utm_n,
            pose.yaw,
            map.tile_index_of(pose),
            tiles.len(),
            found.len(),
            strict.len()
        );
    }
    Ok(())
}
