use serde::{Deserialize, Serialize};

use super::{DatasetSplit, Scene, ScriptLabel, Split};
use crate::driver_models::Trajectory;
use crate::mapper::{driver_view_grid, GridSpec};
use crate::Grid;

/// Which drivers of a scene become training examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PairSelection {
    /// Every non-ego agent with a full history.
    #[default]
    AllDrivers,
    /// Only drivers carrying a generator label.
    ScriptedOnly,
}

/// A driver trajectory and the occupancy ahead of the driver at its last state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub ego_id: i64,
    pub agent_id: i64,
    pub timestamp: f64,
    pub trajectory: Trajectory,
    pub grid: Grid,
    pub split: Option<Split>,
    pub label: Option<ScriptLabel>,
}

/// Builds (trajectory, driver-view grid) pairs from a scene stream.
pub fn extract_training_pairs<'a, I>(
    scenes: I,
    selection: PairSelection,
    spec: &GridSpec,
    split: Option<&DatasetSplit>,
) -> Vec<TrainingPair>
where
    I: IntoIterator<Item = &'a Scene>,
{
    let mut out = Vec::new();
    for scene in scenes {
        let split_label = split.and_then(|s| s.split_of(scene.ego_id));
        for agent in &scene.agents {
            if agent.agent_id == scene.ego_id {
                continue;
            }
            let label = scene.label(agent.agent_id).copied();
            if selection == PairSelection::ScriptedOnly && label.is_none() {
                continue;
            }
            let Some(trajectory) = agent.trajectory() else {
                continue;
            };
            let grid = driver_view_grid(trajectory.last(), agent.agent_id, scene, spec);
            out.push(TrainingPair {
                ego_id: scene.ego_id,
                agent_id: agent.agent_id,
                timestamp: scene.timestamp,
                trajectory,
                grid,
                split: split_label,
                label,
            });
        }
    }
    out
}
