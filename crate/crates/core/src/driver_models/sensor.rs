use serde::{Deserialize, Serialize};

use super::gmm::{Gmm, GmmConfig};
use super::kmeans::{KMeans, KMeansConfig};
use super::standardize::Standardizer;
use super::table::{fit_occupancy_table, OccupancyTable};
use super::trajectory::{FeatureFrame, Trajectory};
use crate::error::{Error, Result};
use crate::ogm::{GridPose, OccupancyGrid};
use crate::scalar::{lit, Real};

/// K candidate driver-frame grids with a categorical prior over them.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverSensorOutput<T> {
    decoded_grids: Vec<OccupancyGrid<T>>,
    prior: Vec<T>,
}

impl<T: Real> DriverSensorOutput<T> {
    pub fn new(decoded_grids: Vec<OccupancyGrid<T>>, prior: Vec<T>) -> Result<Self> {
        if prior.len() < 2 || decoded_grids.len() != prior.len() {
            return Err(Error::Config(format!(
                "sensor output needs K >= 2 grids matching the prior, got {} grids and {} weights",
                decoded_grids.len(),
                prior.len()
            )));
        }
        if prior.iter().any(|&p| !(p >= T::zero())) {
            return Err(Error::InvalidProbability(
                prior.iter().find(|p| !(**p >= T::zero())).unwrap().to_f64().unwrap_or(f64::NAN),
            ));
        }
        let total: T = prior.iter().copied().sum();
        if (total - T::one()).abs() > T::tolerance() {
            return Err(Error::Config(format!("prior sums to {total}, expected 1")));
        }
        let dims = decoded_grids[0].dims();
        if let Some(g) = decoded_grids.iter().find(|g| g.dims() != dims) {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: g.dims(),
            });
        }
        Ok(Self {
            decoded_grids,
            prior,
        })
    }

    pub fn k(&self) -> usize {
        self.prior.len()
    }

    pub fn prior(&self) -> &[T] {
        &self.prior
    }

    pub fn decoded_grids(&self) -> &[OccupancyGrid<T>] {
        &self.decoded_grids
    }

    pub fn grid(&self, z: usize) -> &OccupancyGrid<T> {
        &self.decoded_grids[z]
    }

    /// Classes ordered by decreasing prior, ties by index.
    pub fn ranked_classes(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.k()).collect();
        idx.sort_by(|&a, &b| self.prior[b].partial_cmp(&self.prior[a]).unwrap().then(a.cmp(&b)));
        idx
    }

    /// The same output with every grid anchored at `pose`.
    pub fn placed(&self, pose: GridPose<T>) -> Self {
        Self {
            decoded_grids: self.decoded_grids.iter().map(|g| g.with_pose(pose)).collect(),
            prior: self.prior.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    KMeans,
    Gmm,
    Cvae,
}

impl SensorKind {
    pub fn name(self) -> &'static str {
        match self {
            SensorKind::KMeans => "kmeans",
            SensorKind::Gmm => "gmm",
            SensorKind::Cvae => "cvae",
        }
    }
}

/// Maps an observed driver trajectory to a distribution over the grid ahead.
pub trait DriverSensor<T: Real>: Send + Sync {
    fn kind(&self) -> SensorKind;
    fn k(&self) -> usize;
    fn infer(&self, trajectory: &Trajectory) -> Result<DriverSensorOutput<T>>;
}

/// Standardized feature vector of a trajectory.
pub fn encode_features<T: Real>(
    trajectory: &Trajectory,
    frame: FeatureFrame,
    standardizer: &Standardizer<T>,
) -> Result<Vec<T>> {
    let raw: Vec<T> = trajectory.features(frame).into_iter().map(lit).collect();
    standardizer.apply(&raw)
}

fn raw_features<T: Real>(trajectories: &[&Trajectory], frame: FeatureFrame) -> Vec<Vec<T>> {
    trajectories
        .iter()
        .map(|t| t.features(frame).into_iter().map(lit).collect())
        .collect()
}

fn check_training<T>(trajectories: &[&Trajectory], grids: &[OccupancyGrid<T>], k: usize) -> Result<()> {
    if trajectories.is_empty() {
        return Err(Error::Empty("sensor training set"));
    }
    if trajectories.len() != grids.len() {
        return Err(Error::DimensionMismatch {
            expected: (trajectories.len(), 1),
            actual: (grids.len(), 1),
        });
    }
    if k < 2 {
        return Err(Error::Config(format!("driver sensors need K >= 2, got {k}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
struct Fitted<T, M> {
    frame: FeatureFrame,
    standardizer: Standardizer<T>,
    model: M,
    table: OccupancyTable<T>,
    resolution: T,
}

impl<T: Real, M> Fitted<T, M> {
    fn grids(&self) -> Vec<OccupancyGrid<T>> {
        (0..self.table.k()).map(|z| self.table.grid(z, self.resolution)).collect()
    }
}

/// Fitted pieces of a clustering sensor: feature frame, standardizer,
/// cluster model, occupancy table and grid resolution.
pub type FittedParts<'a, T, M> = (FeatureFrame, &'a Standardizer<T>, &'a M, &'a OccupancyTable<T>, T);

/// Prior-as-sensor baseline with k-means clusters: one-hot prior.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansSensor<T> {
    fitted: Option<Fitted<T, KMeans<T>>>,
}

impl<T> Default for KMeansSensor<T> {
    fn default() -> Self {
        Self { fitted: None }
    }
}

impl<T: Real> KMeansSensor<T> {
    pub fn fit(
        trajectories: &[&Trajectory],
        grids: &[OccupancyGrid<T>],
        config: &KMeansConfig,
        frame: FeatureFrame,
    ) -> Result<Self> {
        check_training(trajectories, grids, config.k)?;
        let raw = raw_features::<T>(trajectories, frame);
        let standardizer = Standardizer::fit(&raw)?;
        let data: Vec<Vec<T>> = raw.iter().map(|x| standardizer.apply(x)).collect::<Result<_>>()?;
        let model = KMeans::fit(&data, config)?;
        let assignments: Vec<usize> = data.iter().map(|x| model.assign(x)).collect();
        let table = fit_occupancy_table(&assignments, grids, config.k)?;
        Ok(Self {
            fitted: Some(Fitted {
                frame,
                standardizer,
                model,
                table,
                resolution: grids[0].resolution(),
            }),
        })
    }

    pub fn from_parts(
        frame: FeatureFrame,
        standardizer: Standardizer<T>,
        model: KMeans<T>,
        table: OccupancyTable<T>,
        resolution: T,
    ) -> Result<Self> {
        if model.k() != table.k() || model.dim() != standardizer.dim() || model.k() < 2 {
            return Err(Error::Config("k-means sensor parts disagree".into()));
        }
        Ok(Self {
            fitted: Some(Fitted {
                frame,
                standardizer,
                model,
                table,
                resolution,
            }),
        })
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted.is_some()
    }

    pub fn parts(&self) -> Option<FittedParts<'_, T, KMeans<T>>> {
        self.fitted
            .as_ref()
            .map(|f| (f.frame, &f.standardizer, &f.model, &f.table, f.resolution))
    }

    pub fn assign(&self, trajectory: &Trajectory) -> Result<usize> {
        let f = self.fitted.as_ref().ok_or(Error::Unfitted)?;
        Ok(f.model.assign(&encode_features(trajectory, f.frame, &f.standardizer)?))
    }
}

impl<T: Real> DriverSensor<T> for KMeansSensor<T> {
    fn kind(&self) -> SensorKind {
        SensorKind::KMeans
    }

    fn k(&self) -> usize {
        self.fitted.as_ref().map_or(0, |f| f.model.k())
    }

    fn infer(&self, trajectory: &Trajectory) -> Result<DriverSensorOutput<T>> {
        let f = self.fitted.as_ref().ok_or(Error::Unfitted)?;
        let z = self.assign(trajectory)?;
        let mut prior = vec![T::zero(); f.model.k()];
        prior[z] = T::one();
        DriverSensorOutput::new(f.grids(), prior)
    }
}

/// Prior-as-sensor baseline with a Gaussian mixture: responsibilities as prior.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmSensor<T> {
    fitted: Option<Fitted<T, Gmm<T>>>,
}

impl<T> Default for GmmSensor<T> {
    fn default() -> Self {
        Self { fitted: None }
    }
}

impl<T: Real> GmmSensor<T> {
    /// Fits the mixture; table rows use hard (maximum-responsibility) assignments.
    pub fn fit(
        trajectories: &[&Trajectory],
        grids: &[OccupancyGrid<T>],
        config: &GmmConfig,
        frame: FeatureFrame,
    ) -> Result<Self> {
        check_training(trajectories, grids, config.k)?;
        let raw = raw_features::<T>(trajectories, frame);
        let standardizer = Standardizer::fit(&raw)?;
        let data: Vec<Vec<T>> = raw.iter().map(|x| standardizer.apply(x)).collect::<Result<_>>()?;
        let model = Gmm::fit(&data, config)?;
        let assignments: Vec<usize> = data.iter().map(|x| argmax(&model.posterior(x))).collect();
        let table = fit_occupancy_table(&assignments, grids, config.k)?;
        Ok(Self {
            fitted: Some(Fitted {
                frame,
                standardizer,
                model,
                table,
                resolution: grids[0].resolution(),
            }),
        })
    }

    pub fn from_parts(
        frame: FeatureFrame,
        standardizer: Standardizer<T>,
        model: Gmm<T>,
        table: OccupancyTable<T>,
        resolution: T,
    ) -> Result<Self> {
        if model.k() != table.k() || model.dim() != standardizer.dim() || model.k() < 2 {
            return Err(Error::Config("GMM sensor parts disagree".into()));
        }
        Ok(Self {
            fitted: Some(Fitted {
                frame,
                standardizer,
                model,
                table,
                resolution,
            }),
        })
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted.is_some()
    }

    pub fn parts(&self) -> Option<FittedParts<'_, T, Gmm<T>>> {
        self.fitted
            .as_ref()
            .map(|f| (f.frame, &f.standardizer, &f.model, &f.table, f.resolution))
    }

    pub fn posterior(&self, trajectory: &Trajectory) -> Result<Vec<T>> {
        let f = self.fitted.as_ref().ok_or(Error::Unfitted)?;
        Ok(f.model.posterior(&encode_features(trajectory, f.frame, &f.standardizer)?))
    }
}

impl<T: Real> DriverSensor<T> for GmmSensor<T> {
    fn kind(&self) -> SensorKind {
        SensorKind::Gmm
    }

    fn k(&self) -> usize {
        self.fitted.as_ref().map_or(0, |f| f.model.k())
    }

    fn infer(&self, trajectory: &Trajectory) -> Result<DriverSensorOutput<T>> {
        let f = self.fitted.as_ref().ok_or(Error::Unfitted)?;
        DriverSensorOutput::new(f.grids(), self.posterior(trajectory)?)
    }
}

pub(crate) fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
