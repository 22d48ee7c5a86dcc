//! Score noisy detections against ground truth with Chamfer AP.

use priormap::eval::{evaluate, EvalConfig};
use priormap::prior::PriorConfig;
use priormap::rng::seeded_rng;
use priormap::sim::{generate_world, ground_truth_in_range, replay_predict, ReplaySpec, WorldSpec};
use priormap::tile_store::GlobalMap;

fn main() -> priormap::Result<()> {
    let world = generate_world(&WorldSpec::default())?;
    let cfg = PriorConfig::default();
    let mut truth = GlobalMap::for_range(&cfg.raster.range)?;
    truth.ingest_static(world.vectors.iter().cloned());
    let pose = world.trajectory(1.0, 30)[20];
    let gt = ground_truth_in_range(&truth, &pose, &cfg);

    for sigma in [0.05, 0.3, 0.8] {
        let spec = ReplaySpec {
            detector_noise_sigma: sigma,
            ..ReplaySpec::default()
        };
        let preds = replay_predict(&gt, &spec, &mut seeded_rng(3));
        let report = evaluate(&preds, &gt, &EvalConfig::standard())?;
        println!("detector noise {sigma} m\n{report}\n");
    }
    Ok(())
}
