//! Discrete-latent conditional VAE driver sensor.
//!
//! The prior encoder maps a trajectory to a categorical distribution over
//! `K` classes; the decoder maps each class to a grid of occupancy
//! probabilities. Training enumerates all classes exactly, so no sampling
//! is involved and gradients are computed by hand-written backpropagation.

mod loss;
mod model;
pub mod nn;
mod train;

pub use loss::{class_weights, elbo_loss, elbo_loss_and_grad, Example, LossBreakdown, LossWeights};
pub use model::{Cvae, CvaeShape};
pub use train::{smoothed_totals, train, Adam, BetaSchedule, TrainConfig, Trained, FULL_SCHEDULE_ITERATIONS};

use crate::driver_models::{
    encode_features, DriverSensor, DriverSensorOutput, FeatureFrame, SensorKind, Standardizer, Trajectory,
};
use crate::error::{Error, Result};
use crate::ogm::OccupancyGrid;
use crate::scalar::{lit, Real};

/// Sensor output from standardized features.
pub fn infer_cvae<T: Real>(model: &Cvae<T>, features: &[T], resolution: T) -> Result<DriverSensorOutput<T>> {
    let prior = model.prior_encode(features)?;
    let grids = (0..model.k())
        .map(|z| model.decode(z, resolution))
        .collect::<Result<Vec<_>>>()?;
    DriverSensorOutput::new(grids, prior)
}

/// Trained CVAE with its feature pipeline; decoded grids are cached.
#[derive(Debug, Clone, PartialEq)]
pub struct CvaeSensor<T> {
    frame: FeatureFrame,
    standardizer: Standardizer<T>,
    model: Cvae<T>,
    resolution: T,
    decoded: Vec<OccupancyGrid<T>>,
}

impl<T: Real> CvaeSensor<T> {
    /// Fits the standardizer and trains the network on (trajectory, grid) pairs.
    pub fn fit(
        trajectories: &[&Trajectory],
        grids: &[OccupancyGrid<T>],
        k: usize,
        config: &TrainConfig,
        frame: FeatureFrame,
    ) -> Result<(Self, Vec<LossBreakdown<T>>)> {
        if trajectories.is_empty() {
            return Err(Error::Empty("sensor training set"));
        }
        if trajectories.len() != grids.len() {
            return Err(Error::DimensionMismatch {
                expected: (trajectories.len(), 1),
                actual: (grids.len(), 1),
            });
        }
        let (h, w) = grids[0].dims();
        if let Some(g) = grids.iter().find(|g| g.dims() != (h, w)) {
            return Err(Error::DimensionMismatch {
                expected: (h, w),
                actual: g.dims(),
            });
        }
        let raw: Vec<Vec<T>> = trajectories
            .iter()
            .map(|t| t.features(frame).into_iter().map(lit).collect())
            .collect();
        let standardizer = Standardizer::fit(&raw)?;
        let features = raw
            .iter()
            .map(|r| standardizer.apply(r))
            .collect::<Result<Vec<_>>>()?;
        let data: Vec<Example<'_, T>> = features
            .iter()
            .zip(grids)
            .map(|(f, g)| Example {
                features: f,
                grid: g.cells(),
            })
            .collect();
        let shape = CvaeShape {
            k,
            grid_height: h,
            grid_width: w,
            ..CvaeShape::default()
        };
        let trained = train(shape, &data, config)?;
        let sensor = Self::from_parts(frame, standardizer, trained.model, grids[0].resolution())?;
        Ok((sensor, trained.trace))
    }

    pub fn from_parts(frame: FeatureFrame, standardizer: Standardizer<T>, model: Cvae<T>, resolution: T) -> Result<Self> {
        if standardizer.dim() != model.shape().feature_len() {
            return Err(Error::DimensionMismatch {
                expected: (model.shape().feature_len(), 1),
                actual: (standardizer.dim(), 1),
            });
        }
        let decoded = (0..model.k())
            .map(|z| model.decode(z, resolution))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            frame,
            standardizer,
            model,
            resolution,
            decoded,
        })
    }

    pub fn frame(&self) -> FeatureFrame {
        self.frame
    }

    pub fn standardizer(&self) -> &Standardizer<T> {
        &self.standardizer
    }

    pub fn model(&self) -> &Cvae<T> {
        &self.model
    }

    pub fn resolution(&self) -> T {
        self.resolution
    }

    pub fn features(&self, trajectory: &Trajectory) -> Result<Vec<T>> {
        encode_features(trajectory, self.frame, &self.standardizer)
    }

    /// Posterior class probabilities for a trajectory and its observed grid.
    pub fn posterior(&self, trajectory: &Trajectory, grid: &OccupancyGrid<T>) -> Result<Vec<T>> {
        self.model.posterior_encode(&self.features(trajectory)?, grid)
    }
}

impl<T: Real> DriverSensor<T> for CvaeSensor<T> {
    fn kind(&self) -> SensorKind {
        SensorKind::Cvae
    }

    fn k(&self) -> usize {
        self.model.k()
    }

    fn infer(&self, trajectory: &Trajectory) -> Result<DriverSensorOutput<T>> {
        let prior = self.model.prior_encode(&self.features(trajectory)?)?;
        DriverSensorOutput::new(self.decoded.clone(), prior)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver_models::{DriverState, HISTORY_LEN};
    use crate::ogm::GridPose;

    fn traj(speed: f64) -> Trajectory {
        Trajectory::new(
            (0..HISTORY_LEN)
                .map(|i| DriverState::new(speed * 0.1 * i as f64, 0.0, 0.0, speed, 0.0, 0.0, 0.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn fitted_sensor_contract() {
        let trajs: Vec<Trajectory> = (0..12).map(|i| traj(2.0 + i as f64)).collect();
        let grids: Vec<OccupancyGrid<f64>> = (0..12)
            .map(|i| {
                let cells = (0..600).map(|c| ((c + i) % 3 == 0) as u8 as f64).collect();
                OccupancyGrid::new(20, 30, 1.0, GridPose::identity(), cells).unwrap()
            })
            .collect();
        let refs: Vec<&Trajectory> = trajs.iter().collect();
        let cfg = TrainConfig {
            batch_size: 4,
            epochs: 2,
            ..Default::default()
        };
        let (sensor, trace) = CvaeSensor::fit(&refs, &grids, 3, &cfg, FeatureFrame::DriverRelative).unwrap();
        assert_eq!(trace.len(), 6);
        assert_eq!(sensor.kind(), SensorKind::Cvae);
        let a = sensor.infer(&trajs[0]).unwrap();
        let b = sensor.infer(&trajs[0]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.k(), 3);
        assert!((a.prior().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(a.decoded_grids(), sensor.infer(&trajs[5]).unwrap().decoded_grids());
        let feats = sensor.features(&trajs[0]).unwrap();
        assert_eq!(infer_cvae(sensor.model(), &feats, 1.0).unwrap(), a);
        let q = sensor.posterior(&trajs[0], &grids[0]).unwrap();
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fit_rejects_bad_inputs() {
        let t = traj(3.0);
        let g = OccupancyGrid::filled(20, 30, 1.0, GridPose::identity(), 0.0).unwrap();
        let cfg = TrainConfig::default();
        assert!(CvaeSensor::<f64>::fit(&[], &[], 2, &cfg, FeatureFrame::World).is_err());
        assert!(CvaeSensor::fit(&[&t], &[g.clone(), g], 2, &cfg, FeatureFrame::World).is_err());
    }
}
