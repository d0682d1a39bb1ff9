//! Driver sensor models: trajectory features, clustering baselines and the
//! shared sensor interface.

mod gmm;
mod kmeans;
mod sensor;
mod standardize;
mod table;
mod trajectory;

pub use gmm::{Gmm, GmmConfig};
pub use kmeans::{KMeans, KMeansConfig};
pub use sensor::{
    encode_features, DriverSensor, DriverSensorOutput, GmmSensor, KMeansSensor, SensorKind,
};
pub use standardize::Standardizer;
pub use table::{fit_occupancy_table, OccupancyCounts, OccupancyTable};
pub use trajectory::{
    DriverState, FeatureFrame, Trajectory, FEATURE_DIM, FRAME_DT, HISTORY_LEN, STATE_DIM,
};
