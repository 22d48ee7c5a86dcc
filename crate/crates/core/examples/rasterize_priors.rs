//! Assemble the two prior heatmaps in each mode and export them.

use priormap::prior::export::write_heatmap;
use priormap::prior::{assemble_priors, retrieve_priors, Mode, PriorConfig};
use priormap::sim::{generate_world, WorldSpec};
use priormap::tile_store::{GlobalMap, Layer, MapVector, RefreshConfig};

fn main() -> priormap::Result<()> {
    let world = generate_world(&WorldSpec::default())?;
    let cfg = PriorConfig::default();
    let mut map = GlobalMap::for_range(&cfg.raster.range)?;
    map.ingest_static(world.vectors.iter().cloned());
    let pose = world.trajectory(1.0, 60)[50];

    // one perfect pass fills the temporal layer so both priors have content
    let seen: Vec<MapVector> = retrieve_priors(&map, Layer::StaticMap, &pose, &cfg)
        .into_iter()
        .map(|v| MapVector {
            confidence: 0.9,
            ..v
        })
        .collect();
    map.refresh(&seen, &pose, &RefreshConfig::default());

    for mode in [Mode::NonPrior, Mode::TemporalPrior, Mode::TemporalMapFusion] {
        let h = assemble_priors(mode, &map, &pose, &cfg)?;
        println!(
            "{:<20} H_t {:>5} cells, H_m {:>5} cells, shape {:?}",
            mode.name(),
            h.temporal.count_ones(),
            h.map.count_ones(),
            h.map.shape()
        );
    }

    let h = assemble_priors(Mode::TemporalMapFusion, &map, &pose, &cfg)?;
    let dir = std::env::temp_dir();
    for path in write_heatmap(&dir, "priormap_h_m", &h.map)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
