//! Occlusion inference for occupancy-grid worlds.
//!
//! Observed driver trajectories are mapped to distributions over the
//! occupancy ahead of each driver (clustering baselines or a discrete-latent
//! conditional VAE), and those inferences are fused into the occluded cells
//! of the ego vehicle's grid with Dempster-Shafer evidential fusion.
//!
//! The numeric core is generic over the scalar type through [`Scalar`] and
//! [`Real`]; the aliases below fix it to `f64`, which is what the data
//! pipeline and the command-line tool use.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cvae;
pub mod driver_models;
pub mod error;
pub mod fusion;
pub mod mapper;
pub mod metrics;
pub mod modelio;
pub mod ogm;
pub mod pipeline;
pub mod scalar;
pub mod scene;

pub use error::{Error, Result};
pub use ogm::{classify_cell, occlusion_mask, CellClass, CellIndex};
pub use scalar::{Real, Scalar};

/// Library version.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Occupancy grid over `f64`.
pub type Grid = ogm::OccupancyGrid<f64>;
/// Grid pose over `f64`.
pub type Pose = ogm::GridPose<f64>;
/// Belief mass over `f64`.
pub type Mass = fusion::BeliefMass<f64>;
/// Driver sensor output over `f64`.
pub type SensorOutput = driver_models::DriverSensorOutput<f64>;
/// Metric report over `f64`.
pub type Report = metrics::MetricReport<f64>;

/// CVAE driver sensor over `f64`.
pub type CvaeModel = cvae::CvaeSensor<f64>;
