//! Occupancy grid data model, grid frames and cell classification.
//!
//! A grid is a row-major `height x width` array of occupancy probabilities
//! anchored in the world by a [`GridPose`]. Rows run along the pose heading
//! (forward), columns run to the left of it. Cell `(0, 0)` touches the pose
//! origin.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real};

/// Occupancy value of a cell without any measurement.
pub const UNKNOWN_PROBABILITY: f64 = 0.5;
/// Lower bound (inclusive) for a cell to be classified occupied.
pub const OCCUPIED_THRESHOLD: f64 = 0.6;
/// Upper bound (inclusive) for a cell to be classified free.
pub const FREE_THRESHOLD: f64 = 0.4;

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle<T: Real>(angle: T) -> T {
    let pi = T::PI();
    let two_pi = pi + pi;
    let mut a = angle % two_pi;
    if a <= -pi {
        a = a + two_pi;
    } else if a > pi {
        a = a - two_pi;
    }
    a
}

/// World placement of a grid's local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPose<T> {
    pub x: T,
    pub y: T,
    heading: T,
}

impl<T: Real> GridPose<T> {
    pub fn new(x: T, y: T, heading: T) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn identity() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn heading(&self) -> T {
        self.heading
    }

    /// Maps a point in the local frame to the world frame.
    pub fn to_world(&self, local: (T, T)) -> (T, T) {
        let (s, c) = self.heading.sin_cos();
        (
            self.x + c * local.0 - s * local.1,
            self.y + s * local.0 + c * local.1,
        )
    }

    /// Maps a world point into the local frame.
    pub fn to_local(&self, world: (T, T)) -> (T, T) {
        let (s, c) = self.heading.sin_cos();
        let dx = world.0 - self.x;
        let dy = world.1 - self.y;
        (c * dx + s * dy, -s * dx + c * dy)
    }
}

/// Row/column address of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
}

impl CellIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl From<(usize, usize)> for CellIndex {
    fn from((row, col): (usize, usize)) -> Self {
        Self { row, col }
    }
}

/// Thresholded occupancy class of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellClass {
    Occupied,
    Free,
    Unknown,
}

/// Classifies an occupancy probability with inclusive thresholds.
pub fn classify_cell<T: Real>(p: T) -> Result<CellClass> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(Error::InvalidProbability(p.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(if p >= lit(OCCUPIED_THRESHOLD) {
        CellClass::Occupied
    } else if p <= lit(FREE_THRESHOLD) {
        CellClass::Free
    } else {
        CellClass::Unknown
    })
}

/// Probabilistic occupancy grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid<T> {
    height: usize,
    width: usize,
    resolution: T,
    pose: GridPose<T>,
    cells: Vec<T>,
}

impl<T: Real> OccupancyGrid<T> {
    /// Builds a grid, checking dimensions and that every value is a probability.
    pub fn new(
        height: usize,
        width: usize,
        resolution: T,
        pose: GridPose<T>,
        cells: Vec<T>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be positive, got {height}x{width}"
            )));
        }
        if !(resolution > T::zero()) || !resolution.is_finite() {
            return Err(Error::InvalidGrid("resolution must be positive".into()));
        }
        if cells.len() != height * width {
            return Err(Error::InvalidGrid(format!(
                "expected {} cells, got {}",
                height * width,
                cells.len()
            )));
        }
        if let Some(bad) = cells.iter().find(|&&p| !(p >= T::zero() && p <= T::one())) {
            return Err(Error::InvalidProbability(bad.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Self {
            height,
            width,
            resolution,
            pose,
            cells,
        })
    }

    /// Grid with every cell set to `value`.
    pub fn filled(
        height: usize,
        width: usize,
        resolution: T,
        pose: GridPose<T>,
        value: T,
    ) -> Result<Self> {
        Self::new(height, width, resolution, pose, vec![value; height * width])
    }

    /// Observed grid: values restricted to {0, 0.5, 1}.
    pub fn observed(
        height: usize,
        width: usize,
        resolution: T,
        pose: GridPose<T>,
        cells: Vec<T>,
    ) -> Result<Self> {
        let half = lit::<T>(UNKNOWN_PROBABILITY);
        if let Some(bad) = cells
            .iter()
            .find(|&&p| p != T::zero() && p != T::one() && p != half)
        {
            return Err(Error::InvalidGrid(format!(
                "observed grid value {bad} not in {{0, 0.5, 1}}"
            )));
        }
        Self::new(height, width, resolution, pose, cells)
    }

    /// Ground-truth grid: values restricted to {0, 1}.
    pub fn ground_truth(
        height: usize,
        width: usize,
        resolution: T,
        pose: GridPose<T>,
        cells: Vec<T>,
    ) -> Result<Self> {
        if let Some(bad) = cells.iter().find(|&&p| p != T::zero() && p != T::one()) {
            return Err(Error::InvalidGrid(format!(
                "ground-truth grid value {bad} not in {{0, 1}}"
            )));
        }
        Self::new(height, width, resolution, pose, cells)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn resolution(&self) -> T {
        self.resolution
    }

    pub fn pose(&self) -> &GridPose<T> {
        &self.pose
    }

    pub fn cells(&self) -> &[T] {
        &self.cells
    }

    pub fn into_cells(self) -> Vec<T> {
        self.cells
    }

    pub fn contains(&self, c: CellIndex) -> bool {
        c.row < self.height && c.col < self.width
    }

    #[inline]
    pub fn flat_index(&self, c: CellIndex) -> usize {
        c.row * self.width + c.col
    }

    pub fn cell_at(&self, flat: usize) -> CellIndex {
        CellIndex::new(flat / self.width, flat % self.width)
    }

    pub fn get(&self, c: CellIndex) -> Result<T> {
        self.check(c)?;
        Ok(self.cells[self.flat_index(c)])
    }

    /// Returns a copy with one cell replaced.
    pub fn with_value(&self, c: CellIndex, p: T) -> Result<Self> {
        self.check(c)?;
        if !(p >= T::zero() && p <= T::one()) {
            return Err(Error::InvalidProbability(p.to_f64().unwrap_or(f64::NAN)));
        }
        let mut out = self.clone();
        let i = out.flat_index(c);
        out.cells[i] = p;
        Ok(out)
    }

    /// Same geometry, new cell values.
    pub fn with_cells(&self, cells: Vec<T>) -> Result<Self> {
        Self::new(self.height, self.width, self.resolution, self.pose, cells)
    }

    /// Same values, new pose.
    pub fn with_pose(&self, pose: GridPose<T>) -> Self {
        Self {
            pose,
            ..self.clone()
        }
    }

    pub fn indices(&self) -> impl Iterator<Item = CellIndex> + '_ {
        (0..self.height).flat_map(move |r| (0..self.width).map(move |c| CellIndex::new(r, c)))
    }

    fn check(&self, c: CellIndex) -> Result<()> {
        if self.contains(c) {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                row: c.row as i64,
                col: c.col as i64,
                height: self.height,
                width: self.width,
            })
        }
    }

    /// Center of the cell in the grid's local frame.
    pub fn cell_center_local(&self, c: CellIndex) -> (T, T) {
        let half = lit::<T>(0.5);
        (
            (count::<T>(c.row) + half) * self.resolution,
            (count::<T>(c.col) + half) * self.resolution,
        )
    }

    /// World-frame center of a cell.
    pub fn cell_to_world(&self, c: CellIndex) -> Result<(T, T)> {
        self.check(c)?;
        Ok(self.pose.to_world(self.cell_center_local(c)))
    }

    /// Cell containing a world point (the cell whose center is nearest).
    pub fn world_to_cell(&self, p: (T, T)) -> Result<CellIndex> {
        let (lx, ly) = self.pose.to_local(p);
        let r = (lx / self.resolution).floor();
        let c = (ly / self.resolution).floor();
        let (ri, ci) = (
            r.to_i64().unwrap_or(i64::MIN),
            c.to_i64().unwrap_or(i64::MIN),
        );
        if ri < 0 || ci < 0 || ri as usize >= self.height || ci as usize >= self.width {
            return Err(Error::OutOfBounds {
                row: ri,
                col: ci,
                height: self.height,
                width: self.width,
            });
        }
        Ok(CellIndex::new(ri as usize, ci as usize))
    }

    /// Classes of every cell, row-major.
    pub fn classes(&self) -> Vec<CellClass> {
        self.cells
            .iter()
            .map(|&p| classify_cell(p).expect("grid values are probabilities"))
            .collect()
    }

    /// Converts the scalar type.
    pub fn cast<U: Real>(&self) -> OccupancyGrid<U> {
        let cv = |v: T| U::from_f64(v.to_f64().unwrap()).unwrap();
        OccupancyGrid {
            height: self.height,
            width: self.width,
            resolution: cv(self.resolution),
            pose: GridPose::new(cv(self.pose.x), cv(self.pose.y), cv(self.pose.heading)),
            // Casting may round a probability just past 1 in f32; clamp.
            cells: self
                .cells
                .iter()
                .map(|&v| cv(v).max(U::zero()).min(U::one()))
                .collect(),
        }
    }
}

/// Cells of an observed grid that carry no measurement (value 0.5).
pub fn occlusion_mask<T: Real>(grid: &OccupancyGrid<T>) -> BTreeSet<CellIndex> {
    let half = lit::<T>(UNKNOWN_PROBABILITY);
    grid.cells
        .iter()
        .enumerate()
        .filter(|(_, &p)| p == half)
        .map(|(i, _)| grid.cell_at(i))
        .collect()
}

/// Writes a grid in OGM-CSV: one header line with
/// `H,W,resolution,pose_x,pose_y,pose_heading`, then `H` rows of `W` values.
pub fn write_ogm_csv<T: Real, W: Write>(grid: &OccupancyGrid<T>, mut out: W) -> Result<()> {
    let f = |v: T| v.to_f64().unwrap();
    writeln!(
        out,
        "{},{},{:.6},{:.6},{:.6},{:.6}",
        grid.height,
        grid.width,
        f(grid.resolution),
        f(grid.pose.x),
        f(grid.pose.y),
        f(grid.pose.heading)
    )?;
    for row in grid.cells.chunks(grid.width) {
        let line: Vec<String> = row.iter().map(|&v| format!("{:.6}", f(v))).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Reads a grid written by [`write_ogm_csv`].
pub fn read_ogm_csv<T: Real, R: BufRead>(input: R) -> Result<OccupancyGrid<T>> {
    let mut lines = input.lines().enumerate();
    let parse = |line: usize, s: &str| -> Result<T> {
        let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("not a number: {s:?}"),
        })?;
        Ok(lit(v))
    };
    let (_, header) = lines.next().ok_or(Error::Empty("OGM-CSV header"))?;
    let header = header?;
    let fields: Vec<&str> = header.split(',').collect();
    if fields.len() != 6 {
        return Err(Error::Parse {
            line: 1,
            message: format!("header needs 6 fields, got {}", fields.len()),
        });
    }
    let dim = |s: &str| -> Result<usize> {
        s.trim().parse().map_err(|_| Error::Parse {
            line: 1,
            message: format!("bad dimension {s:?}"),
        })
    };
    let (h, w) = (dim(fields[0])?, dim(fields[1])?);
    let res = parse(1, fields[2])?;
    let pose = GridPose::new(parse(1, fields[3])?, parse(1, fields[4])?, parse(1, fields[5])?);
    let mut cells = Vec::with_capacity(h * w);
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<&str> = line.split(',').collect();
        if row.len() != w {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected {w} values, got {}", row.len()),
            });
        }
        for v in row {
            cells.push(parse(i + 1, v)?);
        }
    }
    if cells.len() != h * w {
        return Err(Error::Parse {
            line: h + 1,
            message: format!("expected {h} rows, got {}", cells.len() / w.max(1)),
        });
    }
    OccupancyGrid::new(h, w, res, pose, cells)
}

/// Renders a grid as binary PGM (P5); probability `p` maps to gray `round(255 (1 - p))`.
pub fn write_pgm<T: Real, W: Write>(grid: &OccupancyGrid<T>, mut out: W) -> Result<()> {
    write!(out, "P5\n{} {}\n255\n", grid.width, grid.height)?;
    let bytes: Vec<u8> = grid.cells.iter().map(|&p| gray_level(p)).collect();
    out.write_all(&bytes)?;
    Ok(())
}

pub fn gray_level<T: Real>(p: T) -> u8 {
    let g = (lit::<T>(255.0) * (T::one() - p)).round();
    g.to_u8().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(h: usize, w: usize, pose: GridPose<f64>) -> OccupancyGrid<f64> {
        OccupancyGrid::filled(h, w, 1.0, pose, 0.0).unwrap()
    }

    #[test]
    fn cell_centers_under_poses() {
        let g = grid(4, 4, GridPose::identity());
        assert_eq!(g.cell_to_world(CellIndex::new(0, 0)).unwrap(), (0.5, 0.5));
        let g = grid(4, 4, GridPose::new(10.0, 5.0, 0.0));
        assert_eq!(g.cell_to_world(CellIndex::new(0, 0)).unwrap(), (10.5, 5.5));
        let g = grid(4, 4, GridPose::new(0.0, 0.0, PI / 2.0));
        let (x, y) = g.cell_to_world(CellIndex::new(0, 0)).unwrap();
        assert!((x + 0.5).abs() < 1e-12 && (y - 0.5).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_cell() {
        let g = grid(2, 3, GridPose::identity());
        assert!(matches!(
            g.cell_to_world(CellIndex::new(2, 0)),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(g.world_to_cell((-0.1, 0.5)).is_err());
        assert!(g.world_to_cell((0.5, 3.2)).is_err());
    }

    #[test]
    fn heading_is_normalized() {
        assert!((GridPose::new(0.0, 0.0, 3.0 * PI).heading() - PI).abs() < 1e-12);
        assert!((GridPose::new(0.0, 0.0, -PI).heading() - PI).abs() < 1e-12);
        assert!((GridPose::new(0.0f64, 0.0, -0.5).heading() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn classification_thresholds() {
        assert_eq!(classify_cell(1.0).unwrap(), CellClass::Occupied);
        assert_eq!(classify_cell(0.5).unwrap(), CellClass::Unknown);
        assert_eq!(classify_cell(0.6).unwrap(), CellClass::Occupied);
        assert_eq!(classify_cell(0.4).unwrap(), CellClass::Free);
        assert_eq!(classify_cell(0.0f32).unwrap(), CellClass::Free);
        assert!(classify_cell(1.01).is_err());
        assert!(classify_cell(-0.01).is_err());
        assert!(classify_cell(f64::NAN).is_err());
    }

    #[test]
    fn constructor_variants() {
        let p = GridPose::<f64>::identity();
        assert!(OccupancyGrid::observed(1, 3, 1.0, p, vec![0.0, 0.5, 1.0]).is_ok());
        assert!(OccupancyGrid::observed(1, 3, 1.0, p, vec![0.0, 0.3, 1.0]).is_err());
        assert!(OccupancyGrid::ground_truth(1, 2, 1.0, p, vec![0.0, 1.0]).is_ok());
        assert!(OccupancyGrid::ground_truth(1, 2, 1.0, p, vec![0.0, 0.5]).is_err());
        assert!(OccupancyGrid::new(0, 2, 1.0, p, vec![]).is_err());
        assert!(OccupancyGrid::new(1, 2, 0.0, p, vec![0.0, 0.0]).is_err());
        assert!(OccupancyGrid::new(1, 2, 1.0, p, vec![0.0]).is_err());
        assert!(OccupancyGrid::new(1, 1, 1.0, p, vec![1.5]).is_err());
    }

    #[test]
    fn occlusion_masks() {
        let p = GridPose::<f64>::identity();
        let free = OccupancyGrid::filled(5, 6, 1.0, p, 0.0).unwrap();
        assert!(occlusion_mask(&free).is_empty());
        let one = free.with_value(CellIndex::new(3, 4), 0.5).unwrap();
        assert_eq!(
            occlusion_mask(&one).into_iter().collect::<Vec<_>>(),
            vec![CellIndex::new(3, 4)]
        );
        let all = OccupancyGrid::filled(5, 6, 1.0, p, 0.5).unwrap();
        assert_eq!(occlusion_mask(&all).len(), 30);
    }

    #[test]
    fn csv_and_pgm_output() {
        let p = GridPose::new(1.0, -2.0, 0.25);
        let g = OccupancyGrid::new(2, 3, 0.5, p, vec![0.0, 0.5, 1.0, 0.25, 0.125, 0.75]).unwrap();
        let mut buf = Vec::new();
        write_ogm_csv(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "2,3,0.500000,1.000000,-2.000000,0.250000\n\
             0.000000,0.500000,1.000000\n0.250000,0.125000,0.750000\n"
        );
        let back: OccupancyGrid<f64> = read_ogm_csv(&buf[..]).unwrap();
        assert_eq!(back, g);

        let mut pgm = Vec::new();
        write_pgm(&g, &mut pgm).unwrap();
        assert!(pgm.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&pgm[11..], &[255, 128, 0, 191, 223, 64]);
    }

    #[test]
    fn malformed_csv_reports_line() {
        let err = read_ogm_csv::<f64, _>("2,2,1,0,0,0\n0,0\n0,x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = read_ogm_csv::<f64, _>("2,2,1,0,0,0\n0,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    proptest! {
        #[test]
        fn world_cell_round_trip(
            x in -100.0..100.0f64, y in -100.0..100.0f64, h in -7.0..7.0f64,
            res in 0.2..3.0f64, row in 0usize..20, col in 0usize..30,
        ) {
            let g = OccupancyGrid::filled(20, 30, res, GridPose::new(x, y, h), 0.0).unwrap();
            let c = CellIndex::new(row, col);
            let w = g.cell_to_world(c).unwrap();
            prop_assert_eq!(g.world_to_cell(w).unwrap(), c);
        }

        #[test]
        fn classification_is_monotone(a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let pair = (classify_cell(lo).unwrap(), classify_cell(hi).unwrap());
            prop_assert_ne!(pair, (CellClass::Occupied, CellClass::Free));
        }

        #[test]
        fn mask_partitions_indices(cells in proptest::collection::vec(0u8..3, 12)) {
            let vals: Vec<f64> = cells.iter().map(|&v| v as f64 / 2.0).collect();
            let g = OccupancyGrid::observed(3, 4, 1.0, GridPose::identity(), vals.clone()).unwrap();
            let mask = occlusion_mask(&g);
            let rest: BTreeSet<_> = g.indices().filter(|c| !mask.contains(c)).collect();
            prop_assert_eq!(mask.len() + rest.len(), 12);
            for c in &rest {
                prop_assert_ne!(vals[g.flat_index(*c)], 0.5);
            }
        }
    }
}
