//! Ground-truth, ray-traced observed, and driver-view grids for a scene.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::driver_models::DriverState;
use crate::error::{Error, Result};
use crate::ogm::{CellIndex, GridPose, OccupancyGrid, UNKNOWN_PROBABILITY};
use crate::scene::Scene;
use crate::Grid;

/// Dimensions of a grid anchored behind a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Rows, along the vehicle heading.
    pub height: usize,
    /// Columns, across the vehicle heading.
    pub width: usize,
    pub resolution: f64,
}

impl GridSpec {
    pub fn new(height: usize, width: usize, resolution: f64) -> Result<Self> {
        if height == 0 || width == 0 || !(resolution > 0.0) {
            return Err(Error::Config(format!(
                "grid spec {height}x{width} @ {resolution} m is not positive"
            )));
        }
        Ok(Self {
            height,
            width,
            resolution,
        })
    }

    /// Grid pose that puts `(x, y)` at the midpoint of the rear edge, rows
    /// pointing along `heading`.
    pub fn pose_behind(&self, x: f64, y: f64, heading: f64) -> GridPose<f64> {
        let half = self.width as f64 * self.resolution / 2.0;
        let (s, c) = heading.sin_cos();
        GridPose::new(x + s * half, y - c * half, heading)
    }

    /// Cell holding the vehicle the grid is anchored to.
    pub fn anchor_cell(&self) -> CellIndex {
        CellIndex::new(0, self.width / 2)
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }
}

/// Grid sizes used for mapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapperConfig {
    pub ego: GridSpec,
    pub driver: GridSpec,
}

impl Default for MapperConfig {
    fn default() -> Self {
        Self {
            ego: GridSpec {
                height: 70,
                width: 60,
                resolution: 1.0,
            },
            driver: GridSpec {
                height: 20,
                width: 30,
                resolution: 1.0,
            },
        }
    }
}

/// Oriented rectangle of a vehicle, world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl Footprint {
    pub fn new(x: f64, y: f64, heading: f64, length: f64, width: f64) -> Self {
        Self {
            x,
            y,
            heading,
            length,
            width,
        }
    }

    pub fn contains(&self, p: (f64, f64)) -> bool {
        let (s, c) = self.heading.sin_cos();
        let dx = p.0 - self.x;
        let dy = p.1 - self.y;
        let along = c * dx + s * dy;
        let across = -s * dx + c * dy;
        along.abs() <= self.length / 2.0 && across.abs() <= self.width / 2.0
    }

    fn corners(&self) -> [(f64, f64); 4] {
        let (s, c) = self.heading.sin_cos();
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        [(hl, hw), (hl, -hw), (-hl, hw), (-hl, -hw)]
            .map(|(a, b)| (self.x + c * a - s * b, self.y + s * a + c * b))
    }
}

/// Rasterizes footprints by cell-center membership. Returns the binary grid
/// and, per cell, the index of the footprint that claimed it.
pub fn rasterize_footprints(
    spec: &GridSpec,
    pose: GridPose<f64>,
    footprints: &[Footprint],
) -> (Grid, Vec<Option<usize>>) {
    let n = spec.cells();
    let mut cells = vec![0.0; n];
    let mut owners = vec![None; n];
    let res = spec.resolution;
    for (k, fp) in footprints.iter().enumerate() {
        let local: Vec<(f64, f64)> = fp.corners().iter().map(|&p| pose.to_local(p)).collect();
        let min_r = local.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let max_r = local.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let min_c = local.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let max_c = local.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let r0 = ((min_r / res).floor() - 1.0).max(0.0);
        let r1 = ((max_r / res).ceil() + 1.0).min(spec.height as f64);
        let c0 = ((min_c / res).floor() - 1.0).max(0.0);
        let c1 = ((max_c / res).ceil() + 1.0).min(spec.width as f64);
        if r0 >= r1 || c0 >= c1 {
            continue;
        }
        for r in r0 as usize..r1 as usize {
            for c in c0 as usize..c1 as usize {
                let center = pose.to_world(((r as f64 + 0.5) * res, (c as f64 + 0.5) * res));
                if fp.contains(center) {
                    let i = r * spec.width + c;
                    cells[i] = 1.0;
                    owners[i].get_or_insert(k);
                }
            }
        }
    }
    let grid = OccupancyGrid::ground_truth(spec.height, spec.width, res, pose, cells)
        .expect("rasterized values are binary");
    (grid, owners)
}

/// Binary ground-truth grid plus the agent owning each occupied cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Rasterized {
    pub grid: Grid,
    pub owners: Vec<Option<i64>>,
}

/// Marks every cell whose center lies inside an agent footprint, skipping
/// the agent `exclude` (the sensor vehicle).
pub fn rasterize_ground_truth(
    scene: &Scene,
    spec: &GridSpec,
    pose: GridPose<f64>,
    exclude: Option<i64>,
) -> Rasterized {
    let agents: Vec<_> = scene
        .agents
        .iter()
        .filter(|a| Some(a.agent_id) != exclude)
        .collect();
    let footprints: Vec<Footprint> = agents
        .iter()
        .map(|a| {
            let s = a.current();
            Footprint::new(s.x, s.y, s.psi, a.length, a.width)
        })
        .collect();
    let (grid, idx) = rasterize_footprints(spec, pose, &footprints);
    Rasterized {
        grid,
        owners: idx.into_iter().map(|o| o.map(|k| agents[k].agent_id)).collect(),
    }
}

/// Cells visited by the segment between the centers of cells `a` and `b`,
/// including both corner neighbours whenever the segment passes exactly
/// through a grid vertex. Ordered from `a` to `b`.
pub fn supercover(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let (nx, ny) = (dx.abs(), dy.abs());
    let (sx, sy) = (dx.signum(), dy.signum());
    let (mut x, mut y) = a;
    let mut out = Vec::with_capacity((nx + ny + 1) as usize);
    out.push((x, y));
    let (mut ix, mut iy) = (0i64, 0i64);
    while ix < nx || iy < ny {
        let decision = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx;
        if decision == 0 {
            out.push((x + sx, y));
            out.push((x, y + sy));
            x += sx;
            y += sy;
            ix += 1;
            iy += 1;
        } else if decision < 0 {
            x += sx;
            ix += 1;
        } else {
            y += sy;
            iy += 1;
        }
        out.push((x, y));
    }
    out
}

/// Labels 8-connected components of occupied cells.
pub fn occupied_components(grid: &Grid) -> Vec<Option<i64>> {
    let (h, w) = grid.dims();
    let cells = grid.cells();
    let mut labels: Vec<Option<i64>> = vec![None; h * w];
    let mut next = 0i64;
    let mut stack = Vec::new();
    for start in 0..h * w {
        if cells[start] != 1.0 || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(next);
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (r, c) = ((i / w) as i64, (i % w) as i64);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                        continue;
                    }
                    let j = nr as usize * w + nc as usize;
                    if cells[j] == 1.0 && labels[j].is_none() {
                        labels[j] = Some(next);
                        stack.push(j);
                    }
                }
            }
        }
        next += 1;
    }
    labels
}

/// Occlusion-aware observed grid.
///
/// A cell is observed (keeping its ground-truth value) when no occupied cell
/// lies on its supercover ray from `origin` before it; otherwise it is 0.5.
/// Afterwards, every vehicle with at least one observed cell is marked fully
/// observed. `owners` assigns cells to vehicles; when absent, connected
/// components of occupied cells stand in for vehicles.
pub fn trace_visibility(
    ground_truth: &Grid,
    origin: CellIndex,
    owners: Option<&[Option<i64>]>,
) -> Result<Grid> {
    let (h, w) = ground_truth.dims();
    if !ground_truth.contains(origin) {
        return Err(Error::OutOfBounds {
            row: origin.row as i64,
            col: origin.col as i64,
            height: h,
            width: w,
        });
    }
    let gt = ground_truth.cells();
    if let Some(bad) = gt.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidGrid(format!(
            "ground truth must be binary, found {bad}"
        )));
    }
    let o = (origin.row as i64, origin.col as i64);
    let mut out = vec![UNKNOWN_PROBABILITY; h * w];
    for r in 0..h {
        for c in 0..w {
            let ray = supercover(o, (r as i64, c as i64));
            let blocked = ray.len() > 2
                && ray[1..ray.len() - 1]
                    .iter()
                    .any(|&(rr, cc)| gt[rr as usize * w + cc as usize] == 1.0);
            if !blocked {
                out[r * w + c] = gt[r * w + c];
            }
        }
    }
    let components;
    let owners = match owners {
        Some(o) => o,
        None => {
            components = occupied_components(ground_truth);
            &components
        }
    };
    let visible: BTreeSet<i64> = owners
        .iter()
        .zip(&out)
        .filter_map(|(o, &v)| o.filter(|_| v == 1.0))
        .collect();
    for (i, o) in owners.iter().enumerate() {
        if let Some(id) = o {
            if visible.contains(id) {
                out[i] = 1.0;
            }
        }
    }
    OccupancyGrid::observed(h, w, ground_truth.resolution(), *ground_truth.pose(), out)
}

/// Ground truth and observation of the ego vehicle at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoView {
    pub ground_truth: Grid,
    pub observed: Grid,
    pub owners: Vec<Option<i64>>,
    /// Agents with at least one observed footprint cell.
    pub visible: Vec<i64>,
}

/// Builds the ego grids of a scene.
pub fn observe_scene(scene: &Scene, config: &MapperConfig) -> Result<EgoView> {
    let ego = scene.ego().current();
    let pose = config.ego.pose_behind(ego.x, ego.y, ego.psi);
    let raster = rasterize_ground_truth(scene, &config.ego, pose, Some(scene.ego_id));
    let observed = trace_visibility(&raster.grid, config.ego.anchor_cell(), Some(&raster.owners))?;
    let mut seen: BTreeMap<i64, ()> = BTreeMap::new();
    for (o, &v) in raster.owners.iter().zip(observed.cells()) {
        if let (Some(id), 1.0) = (o, v) {
            seen.insert(*id, ());
        }
    }
    Ok(EgoView {
        ground_truth: raster.grid,
        observed,
        owners: raster.owners,
        visible: seen.into_keys().collect(),
    })
}

/// Occlusion-free grid of the region ahead of a driver.
pub fn driver_view_grid(
    state: &DriverState,
    driver_id: i64,
    scene: &Scene,
    spec: &GridSpec,
) -> Grid {
    let pose = spec.pose_behind(state.x, state.y, state.psi);
    rasterize_ground_truth(scene, spec, pose, Some(driver_id)).grid
}
