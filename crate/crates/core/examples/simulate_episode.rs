//! Replay an episode over a half-mapped town and summarise it.

use priormap::sim::{median_latency, Coverage, SimSpec};

fn main() -> priormap::Result<()> {
    let mut spec = SimSpec::default().with_seed(3);
    spec.episode.replay.frames = 150;
    spec.episode.replay.map_coverage = Coverage::Fraction(0.5);
    let episode = spec.run()?;

    let mut runs = Vec::new();
    for m in episode.report.mode_trace() {
        match runs.last_mut() {
            Some((last, n)) if *last == m => *n += 1,
            _ => runs.push((m, 1)),
        }
    }
    for (mode, n) in runs {
        println!("{n:>4} x {}", mode.name());
    }
    if let Some(ap) = &episode.report.ap {
        println!("detector\n{}", ap.detector);
    }
    let lat = median_latency(&episode.latency);
    println!(
        "median ms: retrieval {:.3}, rasterization {:.3}, refreshment {:.3}",
        lat.retrieval_ms, lat.rasterization_ms, lat.refreshment_ms
    );
    Ok(())
}
