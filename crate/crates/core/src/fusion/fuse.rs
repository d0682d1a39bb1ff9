use serde::{Deserialize, Serialize};

use super::correspond::Correspondence;
use super::evidential::{dempster_combine, pignistic, to_belief_mass, BeliefMass};
use crate::driver_models::DriverSensorOutput;
use crate::error::{Error, Result};
use crate::ogm::{CellIndex, GridPose, OccupancyGrid};
use crate::scalar::{count, lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionRule {
    #[default]
    Dempster,
    /// Mean of the contributing probabilities.
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Discount applied when turning probabilities into masses.
    pub delta: f64,
    /// Maximum centre distance for a cell correspondence, in metres.
    pub tolerance: f64,
    pub rule: FusionRule,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            delta: 0.95,
            tolerance: 1.0,
            rule: FusionRule::Dempster,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::Config(format!("delta {} outside [0, 1]", self.delta)));
        }
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            return Err(Error::Config(format!("tolerance {} must be positive", self.tolerance)));
        }
        Ok(())
    }
}

/// A visible driver: its sensor output and the world pose of its grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedDriver<T> {
    pub agent_id: i64,
    pub pose: GridPose<T>,
    pub output: DriverSensorOutput<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedGrid<T> {
    pub grid: OccupancyGrid<T>,
    /// Cells left unknown because two masses were in total conflict.
    pub conflicts: Vec<CellIndex>,
    /// Number of occluded cells that received at least one contribution.
    pub updated: usize,
}

/// Correspondences between an observed ego grid and every visible driver,
/// reusable across mode assignments.
#[derive(Debug, Clone)]
pub struct FusionPlan<'a, T> {
    ego: &'a OccupancyGrid<T>,
    drivers: &'a [ObservedDriver<T>],
    links: Vec<Correspondence>,
    config: FusionConfig,
}

impl<'a, T: Real> FusionPlan<'a, T> {
    pub fn new(
        ego: &'a OccupancyGrid<T>,
        drivers: &'a [ObservedDriver<T>],
        config: FusionConfig,
    ) -> Result<Self> {
        config.validate()?;
        let tol = lit::<T>(config.tolerance);
        let links = drivers
            .iter()
            .map(|d| Correspondence::build(ego, &d.output.grid(0).with_pose(d.pose), tol))
            .collect();
        Ok(Self {
            ego,
            drivers,
            links,
            config,
        })
    }

    pub fn correspondences(&self) -> &[Correspondence] {
        &self.links
    }

    /// Fuses the decoded grid `modes[h]` of each driver `h` into the
    /// occluded ego cells.
    pub fn fuse(&self, modes: &[usize]) -> Result<FusedGrid<T>> {
        if modes.len() != self.drivers.len() {
            return Err(Error::Config(format!(
                "{} modes given for {} drivers",
                modes.len(),
                self.drivers.len()
            )));
        }
        for (d, &z) in self.drivers.iter().zip(modes) {
            if z >= d.output.k() {
                return Err(Error::Config(format!(
                    "mode {z} out of range for driver {} with K = {}",
                    d.agent_id,
                    d.output.k()
                )));
            }
        }
        let n = self.ego.len();
        let mut cells = self.ego.cells().to_vec();
        let mut conflicts = Vec::new();
        let mut touched = vec![0usize; n];
        match self.config.rule {
            FusionRule::Dempster => {
                let delta = lit::<T>(self.config.delta);
                let mut mass: Vec<BeliefMass<T>> = vec![BeliefMass::vacuous(); n];
                let mut conflicted = vec![false; n];
                for ((d, &z), link) in self.drivers.iter().zip(modes).zip(&self.links) {
                    let decoded = d.output.grid(z).cells();
                    for &(e, c) in &link.pairs {
                        if conflicted[e] {
                            continue;
                        }
                        let m = to_belief_mass(decoded[c], delta)?;
                        match dempster_combine(&mass[e], &m) {
                            Ok(next) => mass[e] = next,
                            Err(Error::TotalConflict { .. }) => conflicted[e] = true,
                            Err(other) => return Err(other),
                        }
                        touched[e] += 1;
                    }
                }
                for e in 0..n {
                    if conflicted[e] {
                        conflicts.push(self.ego.cell_at(e));
                    } else if touched[e] > 0 {
                        cells[e] = pignistic(&mass[e]).max(T::zero()).min(T::one());
                    }
                }
            }
            FusionRule::Average => {
                let mut sum = vec![T::zero(); n];
                for ((d, &z), link) in self.drivers.iter().zip(modes).zip(&self.links) {
                    let decoded = d.output.grid(z).cells();
                    for &(e, c) in &link.pairs {
                        sum[e] = sum[e] + decoded[c];
                        touched[e] += 1;
                    }
                }
                for e in 0..n {
                    if touched[e] > 0 {
                        cells[e] = (sum[e] / count(touched[e])).max(T::zero()).min(T::one());
                    }
                }
            }
        }
        let updated = touched.iter().filter(|&&t| t > 0).count() - conflicts.len();
        Ok(FusedGrid {
            grid: self.ego.with_cells(cells)?,
            conflicts,
            updated,
        })
    }
}

/// One-shot fusion of the chosen modes into the observed ego grid.
pub fn fuse_scene<T: Real>(
    ego: &OccupancyGrid<T>,
    drivers: &[ObservedDriver<T>],
    modes: &[usize],
    config: &FusionConfig,
) -> Result<FusedGrid<T>> {
    FusionPlan::new(ego, drivers, *config)?.fuse(modes)
}
