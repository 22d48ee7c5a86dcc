//! Drive along a route, feeding noisy detections back into the temporal
//! layer, and watch it fill up.

use priormap::prior::{retrieve_priors, PriorConfig};
use priormap::rng::seeded_rng;
use priormap::sim::{generate_world, replay_predict, ReplaySpec, WorldSpec};
use priormap::tile_store::{GlobalMap, Layer, RefreshConfig};

fn main() -> priormap::Result<()> {
    let world = generate_world(&WorldSpec::default())?;
    let cfg = PriorConfig::default();
    let replay = ReplaySpec::default();
    let refresh = RefreshConfig::new(0.8)?;

    // the ground truth lives in its own map; the working map starts empty
    let mut truth = GlobalMap::for_range(&cfg.raster.range)?;
    truth.ingest_static(world.vectors.iter().cloned());
    let mut map = GlobalMap::for_range(&cfg.raster.range)?;
    let mut rng = seeded_rng(1);

    for (k, pose) in world.trajectory(replay.step(), 200).iter().enumerate() {
        let prior = retrieve_priors(&map, Layer::Temporal, pose, &cfg);
        let gt = retrieve_priors(&truth, Layer::StaticMap, pose, &cfg);
        let preds = replay_predict(&gt, &replay, &mut rng);
        let stored = map.refresh(&preds, pose, &refresh);
        if k % 40 == 0 {
            println!(
                "frame {k:>3}: {} temporal priors in range, {}/{} detections stored, {} in layer",
                prior.len(),
                stored.len(),
                preds.len(),
                map.vector_count(Layer::Temporal)
            );
        }
    }
    Ok(())
}
