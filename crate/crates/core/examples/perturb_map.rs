//! Corrupt the map around one pose with every operator and save a
//! before/after plot.

use priormap::perturbation::{apply_seeded, ElementPool, PerturbationOp, PerturbationSpec};
use priormap::plot::{write_before_after, Window};
use priormap::prior::{retrieve_priors, PriorConfig};
use priormap::sim::{generate_world, WorldSpec};
use priormap::tile_store::{GlobalMap, Layer};

fn main() -> priormap::Result<()> {
    let world = generate_world(&WorldSpec::default())?;
    let cfg = PriorConfig::default();
    let mut map = GlobalMap::for_range(&cfg.raster.range)?;
    map.ingest_static(world.vectors.iter().cloned());
    let pose = world.trajectory(1.0, 120)[100];

    let before = retrieve_priors(&map, Layer::StaticMap, &pose, &cfg);
    let pool = ElementPool::new(world.vectors.iter().cloned());
    let spec = PerturbationSpec::with_seed(7);
    let ops = PerturbationOp::ORDER.into_iter().collect();
    let after = apply_seeded(&before, &pool, &spec, &ops)?;
    println!("{} vectors before, {} after", before.len(), after.len());

    let path = std::env::temp_dir().join("priormap_before_after.png");
    let window = Window::fit([&before[..], &after[..]]).expect("vectors in range");
    write_before_after(&path, &before, &after, window, 10.0)?;
    println!("plot written to {}", path.display());
    Ok(())
}
