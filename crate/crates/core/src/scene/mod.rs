//! Scene streams: a synthetic intersection generator with known occupancy
//! labels, ingestion of recorded track files, dataset splits and extraction of
//! (trajectory, driver-view grid) training pairs.

mod generator;
mod ingest;
mod pairs;
mod split;

pub use generator::{
    generate_scenarios, reference_pattern, BehaviorKind, BehaviorScript, GeneratorConfig,
    ScenarioGenerator, FOLLOW_GAPS, LEAD_LENGTH, LEAD_WIDTH,
};
pub use ingest::{ingest_tracks, parse_tracks, tracks_to_scenes, IngestConfig};
pub use pairs::{extract_training_pairs, PairSelection, TrainingPair};
pub use split::{DatasetSplit, Split, SplitFractions};

use serde::{Deserialize, Serialize};

use crate::driver_models::{DriverState, Trajectory, FRAME_DT, HISTORY_LEN};
use crate::error::{Error, Result};

/// Full track of one agent sampled at 10 Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub agent_id: i64,
    pub footprint_length: f64,
    pub footprint_width: f64,
    /// Time of `states[0]`, seconds.
    pub start_time: f64,
    pub states: Vec<DriverState>,
}

impl AgentTrack {
    pub fn new(
        agent_id: i64,
        footprint_length: f64,
        footprint_width: f64,
        start_time: f64,
        states: Vec<DriverState>,
    ) -> Result<Self> {
        if !(footprint_length > 0.0 && footprint_width > 0.0) {
            return Err(Error::Config(format!(
                "agent {agent_id}: footprint must be positive"
            )));
        }
        Ok(Self {
            agent_id,
            footprint_length,
            footprint_width,
            start_time,
            states,
        })
    }

    pub fn time_of(&self, index: usize) -> f64 {
        self.start_time + index as f64 * FRAME_DT
    }
}

/// An agent as seen at one time step: footprint plus the most recent
/// contiguous states (at most [`HISTORY_LEN`], oldest first, last is current).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub agent_id: i64,
    pub length: f64,
    pub width: f64,
    pub history: Vec<DriverState>,
}

impl AgentSnapshot {
    pub fn current(&self) -> &DriverState {
        self.history.last().expect("snapshot history is never empty")
    }

    pub fn has_full_history(&self) -> bool {
        self.history.len() >= HISTORY_LEN
    }

    /// The last [`HISTORY_LEN`] states, if available.
    pub fn trajectory(&self) -> Option<Trajectory> {
        if !self.has_full_history() {
            return None;
        }
        let start = self.history.len() - HISTORY_LEN;
        Trajectory::new(self.history[start..].to_vec()).ok()
    }
}

/// Axis-aligned world rectangle, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }
}

/// Generator ground truth for one scripted driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptLabel {
    pub agent_id: i64,
    pub kind: BehaviorKind,
    pub occupied_ahead: bool,
}

/// One time step of the world around an ego vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub timestamp: f64,
    pub ego_id: i64,
    pub agents: Vec<AgentSnapshot>,
    pub world_bounds: Bounds,
    /// Present only for generated scenes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<ScriptLabel>,
}

impl Scene {
    pub fn agent(&self, id: i64) -> Option<&AgentSnapshot> {
        self.agents.iter().find(|a| a.agent_id == id)
    }

    pub fn ego(&self) -> &AgentSnapshot {
        self.agent(self.ego_id).expect("ego is among the scene agents")
    }

    pub fn label(&self, id: i64) -> Option<&ScriptLabel> {
        self.labels.iter().find(|l| l.agent_id == id)
    }

    /// Checks the scene invariants.
    pub fn validate(&self) -> Result<()> {
        if self.agent(self.ego_id).is_none() {
            return Err(Error::Config(format!(
                "ego {} missing from scene at t={}",
                self.ego_id, self.timestamp
            )));
        }
        for a in &self.agents {
            if a.history.is_empty() {
                return Err(Error::Config(format!("agent {} has no state", a.agent_id)));
            }
            let s = a.current();
            if !self.world_bounds.contains(s.x, s.y) {
                return Err(Error::Config(format!(
                    "agent {} at ({}, {}) outside world bounds",
                    a.agent_id, s.x, s.y
                )));
            }
        }
        Ok(())
    }
}
