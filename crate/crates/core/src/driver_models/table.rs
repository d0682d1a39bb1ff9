use num_traits::FromPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ogm::{GridPose, OccupancyGrid};
use crate::scalar::{Real, Scalar};

/// Occupancy counts per cluster and cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyCounts {
    pub k: usize,
    pub cells: usize,
    /// Members per cluster.
    pub members: Vec<usize>,
    /// `occupied[z * cells + c]`: members of `z` with cell `c` occupied.
    pub occupied: Vec<usize>,
}

impl OccupancyCounts {
    pub fn tally(assignments: &[usize], grids: &[Vec<bool>], k: usize) -> Result<Self> {
        if assignments.len() != grids.len() {
            return Err(Error::DimensionMismatch {
                expected: (assignments.len(), 1),
                actual: (grids.len(), 1),
            });
        }
        let cells = grids.first().map_or(0, Vec::len);
        let mut members = vec![0; k];
        let mut occupied = vec![0; k * cells];
        for (&z, g) in assignments.iter().zip(grids) {
            if z >= k {
                return Err(Error::Config(format!("cluster {z} out of range for K = {k}")));
            }
            if g.len() != cells {
                return Err(Error::DimensionMismatch {
                    expected: (1, cells),
                    actual: (1, g.len()),
                });
            }
            members[z] += 1;
            for (c, &o) in g.iter().enumerate() {
                occupied[z * cells + c] += usize::from(o);
            }
        }
        Ok(Self {
            k,
            cells,
            members,
            occupied,
        })
    }
}

/// Per-cluster occupancy probabilities `p(a_c = 1 | z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyTable<T> {
    height: usize,
    width: usize,
    rows: Vec<Vec<T>>,
    empty: Vec<bool>,
}

impl<T: Scalar + FromPrimitive> OccupancyTable<T> {
    /// Bayes' rule with a uniform class prior:
    /// `p = r1 / (r1 + r0)`, `ra = N(z, a, c) / N(a, c)`.
    ///
    /// Cells where one class never occurs use the within-cluster occupied
    /// fraction; clusters without members get 0.5 everywhere.
    pub fn from_counts(counts: &OccupancyCounts, height: usize, width: usize) -> Result<Self> {
        if height * width != counts.cells {
            return Err(Error::DimensionMismatch {
                expected: (height, width),
                actual: (counts.cells, 1),
            });
        }
        let n = |v: usize| T::from_usize(v).expect("count representable");
        let half = T::one() / (T::one() + T::one());
        let cells = counts.cells;
        let mut n1 = vec![0usize; cells];
        let mut n0 = vec![0usize; cells];
        for z in 0..counts.k {
            for c in 0..cells {
                let o = counts.occupied[z * cells + c];
                n1[c] += o;
                n0[c] += counts.members[z] - o;
            }
        }
        let mut rows = Vec::with_capacity(counts.k);
        let mut empty = Vec::with_capacity(counts.k);
        for z in 0..counts.k {
            let m = counts.members[z];
            empty.push(m == 0);
            if m == 0 {
                rows.push(vec![half; cells]);
                continue;
            }
            let row = (0..cells)
                .map(|c| {
                    let z1 = counts.occupied[z * cells + c];
                    let z0 = m - z1;
                    if n1[c] == 0 || n0[c] == 0 {
                        n(z1) / n(m)
                    } else {
                        let r1 = n(z1) / n(n1[c]);
                        let r0 = n(z0) / n(n0[c]);
                        r1 / (r1 + r0)
                    }
                })
                .collect();
            rows.push(row);
        }
        Ok(Self {
            height,
            width,
            rows,
            empty,
        })
    }
}

impl<T: Scalar> OccupancyTable<T> {
    pub fn from_rows(height: usize, width: usize, rows: Vec<Vec<T>>, empty: Vec<bool>) -> Result<Self> {
        if rows.len() != empty.len() || rows.iter().any(|r| r.len() != height * width) {
            return Err(Error::Config("occupancy table rows have inconsistent shape".into()));
        }
        if rows.iter().flatten().any(|&p| !(p >= T::zero() && p <= T::one())) {
            return Err(Error::Config("occupancy table entries must lie in [0, 1]".into()));
        }
        Ok(Self {
            height,
            width,
            rows,
            empty,
        })
    }

    pub fn k(&self) -> usize {
        self.rows.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn row(&self, z: usize) -> &[T] {
        &self.rows[z]
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    /// Whether cluster `z` had no training members.
    pub fn is_empty_cluster(&self, z: usize) -> bool {
        self.empty[z]
    }

    pub fn empty_flags(&self) -> &[bool] {
        &self.empty
    }
}

impl<T: Real> OccupancyTable<T> {
    /// Row `z` as a driver-frame grid (identity pose).
    pub fn grid(&self, z: usize, resolution: T) -> OccupancyGrid<T> {
        OccupancyGrid::new(
            self.height,
            self.width,
            resolution,
            GridPose::identity(),
            self.rows[z].clone(),
        )
        .expect("table rows are probabilities")
    }
}

/// Fits the per-cluster occupancy table from binary driver-view grids.
pub fn fit_occupancy_table<T: Real>(
    assignments: &[usize],
    grids: &[OccupancyGrid<T>],
    k: usize,
) -> Result<OccupancyTable<T>> {
    let first = grids.first().ok_or(Error::Empty("occupancy table training grids"))?;
    let dims = first.dims();
    let mut binary = Vec::with_capacity(grids.len());
    for g in grids {
        if g.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: g.dims(),
            });
        }
        if g.cells().iter().any(|&v| v != T::zero() && v != T::one()) {
            return Err(Error::InvalidGrid("occupancy table needs binary grids".into()));
        }
        binary.push(g.cells().iter().map(|&v| v == T::one()).collect());
    }
    let counts = OccupancyCounts::tally(assignments, &binary, k)?;
    OccupancyTable::from_counts(&counts, dims.0, dims.1)
}
