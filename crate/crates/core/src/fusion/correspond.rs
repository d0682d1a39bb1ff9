use std::collections::BTreeMap;

use super::kdtree::KdTree;
use crate::ogm::{CellIndex, OccupancyGrid, UNKNOWN_PROBABILITY};
use crate::scalar::{lit, Real};

/// Occluded ego cells matched to their nearest driver cell, as flat indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Correspondence {
    pub pairs: Vec<(usize, usize)>,
}

impl Correspondence {
    /// Matches each occluded ego cell to the driver cell whose world-frame
    /// center is nearest, keeping matches within `tolerance` metres.
    pub fn build<T: Real>(ego: &OccupancyGrid<T>, driver: &OccupancyGrid<T>, tolerance: T) -> Self {
        let centers: Vec<[T; 2]> = driver
            .indices()
            .map(|c| {
                let (x, y) = driver.pose().to_world(driver.cell_center_local(c));
                [x, y]
            })
            .collect();
        let tree = KdTree::new(centers);
        let tol2 = tolerance * tolerance;
        let half = lit::<T>(UNKNOWN_PROBABILITY);
        let pairs = ego
            .cells()
            .iter()
            .enumerate()
            .filter(|(_, &p)| p == half)
            .filter_map(|(i, _)| {
                let (x, y) = ego.pose().to_world(ego.cell_center_local(ego.cell_at(i)));
                match tree.nearest([x, y]) {
                    Some((j, d2)) if d2 <= tol2 => Some((i, j)),
                    _ => None,
                }
            })
            .collect();
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Partial map from occluded ego cells to corresponding driver cells.
pub fn correspond_cells<T: Real>(
    ego: &OccupancyGrid<T>,
    driver: &OccupancyGrid<T>,
    tolerance: T,
) -> BTreeMap<CellIndex, CellIndex> {
    Correspondence::build(ego, driver, tolerance)
        .pairs
        .into_iter()
        .map(|(e, d)| (ego.cell_at(e), driver.cell_at(d)))
        .collect()
}
