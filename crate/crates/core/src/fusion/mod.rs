//! Evidential fusion of driver-sensor inferences into the ego grid.

mod correspond;
mod evidential;
mod fuse;
mod kdtree;
mod modes;

pub use correspond::{correspond_cells, Correspondence};
pub use evidential::{dempster_combine, pignistic, to_belief_mass, BeliefMass};
pub use fuse::{fuse_scene, FusedGrid, FusionConfig, FusionPlan, FusionRule, ObservedDriver};
pub use kdtree::KdTree;
pub use modes::{joint_likelihood, top_k_assignments, ModeAssignment};
