//! Deterministic replay harness: synthetic towns, a noisy stand-in detector
//! and the refresh, retrieve, assemble loop, with per-stage timing.

pub mod bench;
pub mod replay;
pub mod world;

pub use bench::{bench, bench_world, BenchRow};
pub use replay::{
    ground_truth_in_range, median_latency, replay_predict, run_episode, run_episode_with,
    ApSummary, Corruption, Coverage, Episode, EpisodeConfig, FrameRecord, FrameView, ModePolicy,
    ReplaySpec, RunReport, StageLatency,
};
pub use world::{generate_world, RoadSegment, World, WorldSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Everything `sim` needs, as read from a spec file. Missing keys take their
/// defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSpec {
    pub world: WorldSpec,
    pub episode: EpisodeConfig,
}

impl SimSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))
    }

    /// One seed for the world and the replay; their streams stay separate.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.world.seed = seed;
        self.episode.replay.seed = seed;
        self
    }

    pub fn run(&self) -> Result<Episode> {
        run_episode(&generate_world(&self.world)?, &self.episode)
    }
}

/// World plus trajectory, for regression corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub world: World,
    pub trajectory: Vec<crate::geometry::EgoPose>,
}

impl Scenario {
    pub fn new(world: World, step: f64, frames: usize) -> Self {
        let trajectory = world.trajectory(step, frames);
        Self { world, trajectory }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scenario serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))
    }
}
