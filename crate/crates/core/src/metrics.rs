//! Accuracy, mean squared error and image similarity over an evaluation mask.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ogm::{classify_cell, CellClass, CellIndex, OccupancyGrid};
use crate::scalar::{count, lit, Real};

/// Cells over which metrics are computed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalMask {
    height: usize,
    width: usize,
    cells: Vec<bool>,
}

impl EvalMask {
    /// Every cell of an `height x width` grid.
    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            cells: vec![true; height * width],
        }
    }

    pub fn from_cells(height: usize, width: usize, cells: &BTreeSet<CellIndex>) -> Result<Self> {
        let mut m = vec![false; height * width];
        for c in cells {
            if c.row >= height || c.col >= width {
                return Err(Error::OutOfBounds {
                    row: c.row as i64,
                    col: c.col as i64,
                    height,
                    width,
                });
            }
            m[c.row * width + c.col] = true;
        }
        Ok(Self {
            height,
            width,
            cells: m,
        })
    }

    /// Occluded cells of `observed`, minus cells where any of `exclude`
    /// classifies as unknown.
    pub fn occluded<T: Real>(observed: &OccupancyGrid<T>, exclude: &[&OccupancyGrid<T>]) -> Result<Self> {
        for g in exclude {
            if g.dims() != observed.dims() {
                return Err(Error::DimensionMismatch {
                    expected: observed.dims(),
                    actual: g.dims(),
                });
            }
        }
        let half = lit::<T>(0.5);
        let cells = (0..observed.len())
            .map(|i| {
                observed.cells()[i] == half
                    && exclude
                        .iter()
                        .all(|g| classify_cell(g.cells()[i]).ok() != Some(CellClass::Unknown))
            })
            .collect();
        let (height, width) = observed.dims();
        Ok(Self {
            height,
            width,
            cells,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn contains(&self, flat: usize) -> bool {
        self.cells[flat]
    }

    pub fn len(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn indices(&self) -> BTreeSet<CellIndex> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| CellIndex::new(i / self.width, i % self.width))
            .collect()
    }
}

/// A metric broken down by ground-truth class. `None` marks an empty
/// denominator.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerClass<T> {
    pub occupied: Option<T>,
    pub free: Option<T>,
    pub overall: Option<T>,
}

/// Occupied, free and overall slots.
const SLOTS: usize = 3;

impl<T: Copy> PerClass<T> {
    fn slots(&self) -> [Option<T>; SLOTS] {
        [self.occupied, self.free, self.overall]
    }

    fn from_slots(s: [Option<T>; SLOTS]) -> Self {
        Self {
            occupied: s[0],
            free: s[1],
            overall: s[2],
        }
    }
}

/// Sufficient statistics of one grid over its mask.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct CellStats<T> {
    n: [usize; SLOTS],
    correct: [usize; SLOTS],
    sq: [T; SLOTS],
    sq2: [T; SLOTS],
}

fn check_pair<T: Real>(pred: &OccupancyGrid<T>, gt: &OccupancyGrid<T>, mask: &EvalMask) -> Result<()> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            expected: gt.dims(),
            actual: pred.dims(),
        });
    }
    if mask.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            expected: gt.dims(),
            actual: mask.dims(),
        });
    }
    Ok(())
}

fn cell_stats<T: Real>(pred: &OccupancyGrid<T>, gt: &OccupancyGrid<T>, mask: &EvalMask) -> Result<CellStats<T>> {
    check_pair(pred, gt, mask)?;
    let mut s = CellStats {
        n: [0; SLOTS],
        correct: [0; SLOTS],
        sq: [T::zero(); SLOTS],
        sq2: [T::zero(); SLOTS],
    };
    for (i, (&p, &g)) in pred.cells().iter().zip(gt.cells()).enumerate() {
        if !mask.contains(i) {
            continue;
        }
        let (slot, truth) = if g == T::one() {
            (0, CellClass::Occupied)
        } else if g == T::zero() {
            (1, CellClass::Free)
        } else {
            return Err(Error::InvalidGrid(format!(
                "ground truth must be binary on the mask, found {g} at cell {i}"
            )));
        };
        let hit = usize::from(classify_cell(p)? == truth);
        let e = (p - g) * (p - g);
        for k in [slot, 2] {
            s.n[k] += 1;
            s.correct[k] += hit;
            s.sq[k] = s.sq[k] + e;
            s.sq2[k] = s.sq2[k] + e * e;
        }
    }
    Ok(s)
}

impl<T: Real> CellStats<T> {
    fn accuracy(&self) -> PerClass<T> {
        PerClass::from_slots(std::array::from_fn(|k| {
            (self.n[k] > 0).then(|| count::<T>(self.correct[k]) / count(self.n[k]))
        }))
    }

    fn mse(&self) -> PerClass<T> {
        PerClass::from_slots(std::array::from_fn(|k| {
            (self.n[k] > 0).then(|| self.sq[k] / count(self.n[k]))
        }))
    }
}

/// Thresholded accuracy; unknown predictions count as wrong.
pub fn accuracy<T: Real>(pred: &OccupancyGrid<T>, gt: &OccupancyGrid<T>, mask: &EvalMask) -> Result<PerClass<T>> {
    Ok(cell_stats(pred, gt, mask)?.accuracy())
}

/// Mean squared error between predicted probabilities and the binary truth.
pub fn mse<T: Real>(pred: &OccupancyGrid<T>, gt: &OccupancyGrid<T>, mask: &EvalMask) -> Result<PerClass<T>> {
    Ok(cell_stats(pred, gt, mask)?.mse())
}

/// Image similarity split by class; `total` is the sum of both classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity<T> {
    pub occupied: T,
    pub free: T,
    pub total: T,
}

/// Manhattan distance (in cells) from every cell to the nearest `true` cell.
fn manhattan_transform(h: usize, w: usize, targets: &[bool]) -> Vec<usize> {
    let inf = usize::MAX / 4;
    let mut d: Vec<usize> = targets.iter().map(|&t| if t { 0 } else { inf }).collect();
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if r > 0 {
                d[i] = d[i].min(d[i - w] + 1);
            }
            if c > 0 {
                d[i] = d[i].min(d[i - 1] + 1);
            }
        }
    }
    for r in (0..h).rev() {
        for c in (0..w).rev() {
            let i = r * w + c;
            if r + 1 < h {
                d[i] = d[i].min(d[i + w] + 1);
            }
            if c + 1 < w {
                d[i] = d[i].min(d[i + 1] + 1);
            }
        }
    }
    d
}

/// Mean distance from class-`a` cells of `from` to the nearest class-`a`
/// cell of `to`.
fn directed<T: Real>(h: usize, w: usize, from: &[bool], to: &[bool]) -> T {
    let n = from.iter().filter(|&&b| b).count();
    if n == 0 {
        return T::zero();
    }
    if !to.iter().any(|&b| b) {
        return count((h - 1) + (w - 1));
    }
    let d = manhattan_transform(h, w, to);
    let sum: usize = from.iter().zip(&d).filter(|(&b, _)| b).map(|(_, &v)| v).sum();
    count::<T>(sum) / count(n)
}

fn class_masks<T: Real>(g: &OccupancyGrid<T>, mask: Option<&EvalMask>) -> Result<(Vec<bool>, Vec<bool>)> {
    let mut occ = vec![false; g.len()];
    let mut free = vec![false; g.len()];
    for (i, &p) in g.cells().iter().enumerate() {
        if mask.is_some_and(|m| !m.contains(i)) {
            continue;
        }
        match classify_cell(p)? {
            CellClass::Occupied => occ[i] = true,
            CellClass::Free => free[i] = true,
            CellClass::Unknown => {}
        }
    }
    Ok((occ, free))
}

fn similarity_impl<T: Real>(
    m1: &OccupancyGrid<T>,
    m2: &OccupancyGrid<T>,
    mask: Option<&EvalMask>,
) -> Result<Similarity<T>> {
    if m1.dims() != m2.dims() {
        return Err(Error::DimensionMismatch {
            expected: m1.dims(),
            actual: m2.dims(),
        });
    }
    if let Some(m) = mask {
        if m.dims() != m1.dims() {
            return Err(Error::DimensionMismatch {
                expected: m1.dims(),
                actual: m.dims(),
            });
        }
    }
    let (h, w) = m1.dims();
    let (o1, f1) = class_masks(m1, mask)?;
    let (o2, f2) = class_masks(m2, mask)?;
    let occupied = directed::<T>(h, w, &o1, &o2) + directed::<T>(h, w, &o2, &o1);
    let free = directed::<T>(h, w, &f1, &f2) + directed::<T>(h, w, &f2, &f1);
    Ok(Similarity {
        occupied,
        free,
        total: occupied + free,
    })
}

/// Image similarity between two grids; unknown cells are ignored.
pub fn image_similarity<T: Real>(m1: &OccupancyGrid<T>, m2: &OccupancyGrid<T>) -> Result<Similarity<T>> {
    similarity_impl(m1, m2, None)
}

/// Image similarity restricted to the masked cells of both grids.
pub fn image_similarity_masked<T: Real>(
    m1: &OccupancyGrid<T>,
    m2: &OccupancyGrid<T>,
    mask: &EvalMask,
) -> Result<Similarity<T>> {
    similarity_impl(m1, m2, Some(mask))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Accuracy,
    Mse,
    ImageSimilarity,
}

fn similarity_slots<T: Real>(s: &Similarity<T>) -> [Option<T>; SLOTS] {
    [Some(s.occupied), Some(s.free), Some(s.total)]
}

/// Indices of the (up to) three most likely candidates.
fn top3_indices<T: Real>(likelihoods: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..likelihoods.len()).collect();
    idx.sort_by(|&a, &b| {
        likelihoods[b]
            .partial_cmp(&likelihoods[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(3);
    idx
}

fn better<T: Real>(metric: Metric, a: T, b: T) -> bool {
    match metric {
        Metric::Accuracy => a > b,
        Metric::Mse | Metric::ImageSimilarity => a < b,
    }
}

/// Best value of `metric` over the three most likely candidates, chosen
/// separately for each class slot.
pub fn top3_metrics<T: Real>(
    candidates: &[(T, &OccupancyGrid<T>)],
    gt: &OccupancyGrid<T>,
    mask: &EvalMask,
    metric: Metric,
) -> Result<PerClass<T>> {
    if candidates.is_empty() {
        return Err(Error::Empty("top-3 candidates"));
    }
    let likelihoods: Vec<T> = candidates.iter().map(|c| c.0).collect();
    let mut best: [Option<T>; SLOTS] = [None; SLOTS];
    for i in top3_indices(&likelihoods) {
        let grid = candidates[i].1;
        let slots = match metric {
            Metric::Accuracy => accuracy(grid, gt, mask)?.slots(),
            Metric::Mse => mse(grid, gt, mask)?.slots(),
            Metric::ImageSimilarity => similarity_slots(&image_similarity_masked(grid, gt, mask)?),
        };
        for (b, v) in best.iter_mut().zip(slots) {
            if let Some(v) = v {
                if b.is_none_or(|cur| better(metric, v, cur)) {
                    *b = Some(v);
                }
            }
        }
    }
    Ok(PerClass::from_slots(best))
}

/// A mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate<T> {
    pub value: T,
    pub std_error: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Pool<T> {
    n: usize,
    correct: usize,
    sq: T,
    sq2: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Moments<T> {
    n: usize,
    sum: T,
    sum2: T,
}

impl<T: Real> Moments<T> {
    fn push(&mut self, v: T) {
        self.n += 1;
        self.sum = self.sum + v;
        self.sum2 = self.sum2 + v * v;
    }

    fn estimate(&self) -> Option<Estimate<T>> {
        if self.n == 0 {
            return None;
        }
        let n = count::<T>(self.n);
        let mean = self.sum / n;
        let var = if self.n > 1 {
            ((self.sum2 - n * mean * mean) / (n - T::one())).max(T::zero())
        } else {
            T::zero()
        };
        Some(Estimate {
            value: mean,
            std_error: (var / n).sqrt(),
        })
    }
}

/// One row of results: plain and top-3 variants of every metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport<T> {
    pub grids: usize,
    /// Evaluated cells per class slot.
    pub cells: PerClass<usize>,
    pub accuracy: PerClass<Estimate<T>>,
    pub mse: PerClass<Estimate<T>>,
    pub image_similarity: PerClass<Estimate<T>>,
    pub top3_accuracy: PerClass<Estimate<T>>,
    pub top3_mse: PerClass<Estimate<T>>,
    pub top3_image_similarity: PerClass<Estimate<T>>,
}

/// Pools per-cell accuracy and MSE and per-grid image similarity over a
/// dataset.
#[derive(Debug, Clone, Default)]
pub struct MetricAccumulator<T> {
    grids: usize,
    plain: [Pool<T>; SLOTS],
    top3_acc: [Pool<T>; SLOTS],
    top3_mse: [Pool<T>; SLOTS],
    is: [Moments<T>; SLOTS],
    top3_is: [Moments<T>; SLOTS],
}

fn pool_stats<T: Real>(pools: &mut [Pool<T>; SLOTS], s: &CellStats<T>, k: usize) {
    pools[k].n += s.n[k];
    pools[k].correct += s.correct[k];
    pools[k].sq = pools[k].sq + s.sq[k];
    pools[k].sq2 = pools[k].sq2 + s.sq2[k];
}

impl<T: Real> MetricAccumulator<T> {
    pub fn new() -> Self {
        Self {
            grids: 0,
            plain: [Pool::default(); SLOTS],
            top3_acc: [Pool::default(); SLOTS],
            top3_mse: [Pool::default(); SLOTS],
            is: [Moments::default(); SLOTS],
            top3_is: [Moments::default(); SLOTS],
        }
    }

    /// Adds one evaluated grid. `candidates` are the alternative modes with
    /// their likelihoods; the first of the most likely is `pred`'s mode
    /// when `pred` is itself the most likely candidate.
    pub fn add(
        &mut self,
        pred: &OccupancyGrid<T>,
        candidates: &[(T, &OccupancyGrid<T>)],
        gt: &OccupancyGrid<T>,
        mask: &EvalMask,
    ) -> Result<()> {
        let s = cell_stats(pred, gt, mask)?;
        let sim = image_similarity_masked(pred, gt, mask)?;
        let top: Vec<usize> = if candidates.is_empty() {
            Vec::new()
        } else {
            top3_indices(&candidates.iter().map(|c| c.0).collect::<Vec<_>>())
        };
        let mut cand_stats = Vec::with_capacity(top.len());
        let mut cand_sims = Vec::with_capacity(top.len());
        for &i in &top {
            cand_stats.push(cell_stats(candidates[i].1, gt, mask)?);
            cand_sims.push(image_similarity_masked(candidates[i].1, gt, mask)?);
        }
        if cand_stats.is_empty() {
            cand_stats.push(s);
            cand_sims.push(sim);
        }
        self.grids += 1;
        let sim_slots = similarity_slots(&sim);
        for k in 0..SLOTS {
            pool_stats(&mut self.plain, &s, k);
            // Candidates share the ground truth, so their cell counts agree.
            let best_acc = (0..cand_stats.len())
                .max_by(|&a, &b| {
                    (cand_stats[a].correct[k])
                        .cmp(&cand_stats[b].correct[k])
                        .then(b.cmp(&a))
                })
                .unwrap();
            pool_stats(&mut self.top3_acc, &cand_stats[best_acc], k);
            let best_mse = (0..cand_stats.len())
                .min_by(|&a, &b| {
                    cand_stats[a].sq[k]
                        .partial_cmp(&cand_stats[b].sq[k])
                        .unwrap()
                        .then(a.cmp(&b))
                })
                .unwrap();
            pool_stats(&mut self.top3_mse, &cand_stats[best_mse], k);
            self.is[k].push(sim_slots[k].unwrap());
            let best_is = cand_sims
                .iter()
                .map(|c| similarity_slots(c)[k].unwrap())
                .fold(T::infinity(), T::min);
            self.top3_is[k].push(best_is);
        }
        Ok(())
    }

    pub fn grids(&self) -> usize {
        self.grids
    }

    pub fn report(&self) -> MetricReport<T> {
        let acc = |pools: &[Pool<T>; SLOTS]| {
            PerClass::from_slots(std::array::from_fn(|k| {
                let p = pools[k];
                (p.n > 0).then(|| {
                    let n = count::<T>(p.n);
                    let v = count::<T>(p.correct) / n;
                    Estimate {
                        value: v,
                        std_error: (v * (T::one() - v) / n).sqrt(),
                    }
                })
            }))
        };
        let err = |pools: &[Pool<T>; SLOTS]| {
            PerClass::from_slots(std::array::from_fn(|k| {
                let p = pools[k];
                Moments {
                    n: p.n,
                    sum: p.sq,
                    sum2: p.sq2,
                }
                .estimate()
            }))
        };
        let sims = |m: &[Moments<T>; SLOTS]| PerClass::from_slots(std::array::from_fn(|k| m[k].estimate()));
        MetricReport {
            grids: self.grids,
            cells: PerClass::from_slots(std::array::from_fn(|k| Some(self.plain[k].n))),
            accuracy: acc(&self.plain),
            mse: err(&self.plain),
            image_similarity: sims(&self.is),
            top3_accuracy: acc(&self.top3_acc),
            top3_mse: err(&self.top3_mse),
            top3_image_similarity: sims(&self.top3_is),
        }
    }
}

const CLASS_NAMES: [&str; SLOTS] = ["occ", "free", "overall"];

/// Writes one row per method in the layout of the results table:
/// accuracy, MSE and IS for each class, plain then top-3. IS values are
/// divided by 100; absent values are left empty.
pub fn write_table_csv<T: Real, W: Write>(rows: &[(&str, &MetricReport<T>)], mut out: W) -> Result<()> {
    let mut header = vec!["method".to_string()];
    for variant in ["", "top3_"] {
        for metric in ["acc", "mse", "is"] {
            for class in CLASS_NAMES {
                header.push(format!("{variant}{metric}_{class}"));
            }
        }
    }
    header.push("grids".into());
    writeln!(out, "{}", header.join(","))?;
    let hundred = lit::<T>(100.0);
    for (name, r) in rows {
        let mut fields = vec![name.to_string()];
        for set in [
            [&r.accuracy, &r.mse, &r.image_similarity],
            [&r.top3_accuracy, &r.top3_mse, &r.top3_image_similarity],
        ] {
            for (m, values) in set.iter().enumerate() {
                for v in values.slots() {
                    fields.push(match v {
                        Some(e) if m == 2 => format!("{:.4}", e.value / hundred),
                        Some(e) => format!("{:.4}", e.value),
                        None => String::new(),
                    });
                }
            }
        }
        fields.push(r.grids.to_string());
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ogm::GridPose;
    use proptest::prelude::*;

    fn grid(h: usize, w: usize, cells: &[f64]) -> OccupancyGrid<f64> {
        OccupancyGrid::new(h, w, 1.0, GridPose::identity(), cells.to_vec()).unwrap()
    }

    #[test]
    fn exact_prediction_is_perfect() {
        let gt = grid(1, 4, &[1.0, 0.0, 0.0, 1.0]);
        let m = EvalMask::full(1, 4);
        let a = accuracy(&gt, &gt, &m).unwrap();
        assert_eq!((a.occupied, a.free, a.overall), (Some(1.0), Some(1.0), Some(1.0)));
        assert_eq!(mse(&gt, &gt, &m).unwrap().overall, Some(0.0));
    }

    #[test]
    fn all_unknown_prediction() {
        let gt = grid(1, 4, &[1.0, 0.0, 0.0, 1.0]);
        let pred = grid(1, 4, &[0.5; 4]);
        let m = EvalMask::full(1, 4);
        let a = accuracy(&pred, &gt, &m).unwrap();
        assert_eq!((a.occupied, a.free, a.overall), (Some(0.0), Some(0.0), Some(0.0)));
        let e = mse(&pred, &gt, &m).unwrap();
        assert_eq!((e.occupied, e.free, e.overall), (Some(0.25), Some(0.25), Some(0.25)));
        // Prediction-side distances vanish; truth-side ones take the maximum.
        let s = image_similarity(&pred, &gt).unwrap();
        assert_eq!(s.occupied, 3.0);
        assert_eq!(s.free, 3.0);
    }

    #[test]
    fn hand_classified_accuracy() {
        let gt = grid(1, 4, &[1.0, 0.0, 0.0, 1.0]);
        let pred = grid(1, 4, &[0.9, 0.2, 0.7, 0.5]);
        let a = accuracy(&pred, &gt, &EvalMask::full(1, 4)).unwrap();
        assert_eq!((a.occupied, a.free, a.overall), (Some(0.5), Some(0.5), Some(0.5)));
    }

    #[test]
    fn hand_computed_mse() {
        let gt = grid(1, 2, &[1.0, 0.0]);
        let pred = grid(1, 2, &[0.9, 0.2]);
        let e = mse(&pred, &gt, &EvalMask::full(1, 2)).unwrap();
        assert!((e.overall.unwrap() - 0.025).abs() < 1e-15);
    }

    #[test]
    fn empty_denominators_are_absent() {
        let gt = grid(1, 2, &[0.0, 0.0]);
        let a = accuracy(&gt, &gt, &EvalMask::full(1, 2)).unwrap();
        assert_eq!(a.occupied, None);
        let none = EvalMask::from_cells(1, 2, &BTreeSet::new()).unwrap();
        assert_eq!(mse(&gt, &gt, &none).unwrap().overall, None);
    }

    #[test]
    fn non_binary_truth_is_rejected_on_the_mask_only() {
        let gt = grid(1, 2, &[0.3, 1.0]);
        assert!(accuracy(&gt, &gt, &EvalMask::full(1, 2)).is_err());
        let m = EvalMask::from_cells(1, 2, &[CellIndex::new(0, 1)].into()).unwrap();
        assert!(accuracy(&gt, &gt, &m).is_ok());
    }

    #[test]
    fn two_by_two_similarity() {
        let m1 = grid(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let m2 = grid(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let s = image_similarity(&m1, &m2).unwrap();
        assert!((s.total - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.occupied, 2.0);
    }

    #[test]
    fn top3_examples() {
        let gt = grid(1, 2, &[1.0, 0.0]);
        let m = EvalMask::full(1, 2);
        let a = grid(1, 2, &[0.9, 0.2]);
        let single = top3_metrics(&[(1.0, &a)], &gt, &m, Metric::Mse).unwrap();
        assert_eq!(single, mse(&a, &gt, &m).unwrap());

        let noise = grid(1, 2, &[0.1, 0.8]);
        let c = [(0.5, &noise), (0.3, &gt), (0.2, &noise)];
        assert_eq!(top3_metrics(&c, &gt, &m, Metric::Accuracy).unwrap().overall, Some(1.0));

        // Per-candidate overall MSEs 0.3, 0.1 and 0.2.
        let one = OccupancyGrid::new(1, 1, 1.0, GridPose::identity(), vec![1.0]).unwrap();
        let p = |e: f64| OccupancyGrid::new(1, 1, 1.0, GridPose::identity(), vec![1.0 - e.sqrt()]).unwrap();
        let (g1, g2, g3) = (p(0.3), p(0.1), p(0.2));
        let fourth = p(0.01);
        let c = [(0.4, &g1), (0.3, &g2), (0.2, &g3), (0.1, &fourth)];
        let best = top3_metrics(&c, &one, &EvalMask::full(1, 1), Metric::Mse).unwrap();
        assert!((best.overall.unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn occluded_mask_construction() {
        let observed = grid(1, 4, &[0.0, 0.5, 0.5, 0.5]);
        let fused = grid(1, 4, &[0.0, 0.9, 0.5, 0.1]);
        let m = EvalMask::occluded(&observed, &[&fused]).unwrap();
        assert_eq!(m.indices(), [CellIndex::new(0, 1), CellIndex::new(0, 3)].into());
        let m = EvalMask::occluded(&observed, &[]).unwrap();
        assert_eq!(m.len(), 3);
    }

    #[test]
    fn accumulator_pools_cells() {
        let gt = grid(1, 2, &[1.0, 0.0]);
        let m = EvalMask::full(1, 2);
        let good = grid(1, 2, &[0.9, 0.1]);
        let bad = grid(1, 2, &[0.1, 0.9]);
        let mut acc = MetricAccumulator::new();
        acc.add(&good, &[], &gt, &m).unwrap();
        acc.add(&bad, &[(0.6, &bad), (0.4, &good)], &gt, &m).unwrap();
        let r = acc.report();
        assert_eq!(r.grids, 2);
        assert_eq!(r.cells.overall, Some(4));
        assert_eq!(r.accuracy.overall.unwrap().value, 0.5);
        assert_eq!(r.top3_accuracy.overall.unwrap().value, 1.0);
        assert!(r.top3_mse.overall.unwrap().value <= r.mse.overall.unwrap().value);
        let mut csv = Vec::new();
        write_table_csv(&[("test", &r)], &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
        assert!(lines[1].starts_with("test,0.5000,0.5000,0.5000"));
    }

    fn brute_directed(g1: &[Option<bool>], g2: &[Option<bool>], w: usize, class: bool, max: usize) -> f64 {
        let from: Vec<usize> = (0..g1.len()).filter(|&i| g1[i] == Some(class)).collect();
        if from.is_empty() {
            return 0.0;
        }
        let to: Vec<usize> = (0..g2.len()).filter(|&i| g2[i] == Some(class)).collect();
        if to.is_empty() {
            return max as f64;
        }
        let total: usize = from
            .iter()
            .map(|&a| {
                to.iter()
                    .map(|&b| (a / w).abs_diff(b / w) + (a % w).abs_diff(b % w))
                    .min()
                    .unwrap()
            })
            .sum();
        total as f64 / from.len() as f64
    }

    fn classes(g: &OccupancyGrid<f64>) -> Vec<Option<bool>> {
        g.cells()
            .iter()
            .map(|&p| match classify_cell(p).unwrap() {
                CellClass::Occupied => Some(true),
                CellClass::Free => Some(false),
                CellClass::Unknown => None,
            })
            .collect()
    }

    fn random_grid() -> impl Strategy<Value = OccupancyGrid<f64>> {
        (1usize..=10, 1usize..=10).prop_flat_map(|(h, w)| {
            proptest::collection::vec(prop_oneof![Just(0.0), Just(1.0), Just(0.5), 0.0f64..=1.0], h * w)
                .prop_map(move |c| grid(h, w, &c))
        })
    }

    proptest! {
        #[test]
        fn similarity_matches_all_pairs_oracle(
            (a, b) in random_grid().prop_flat_map(|a| {
                let (h, w) = a.dims();
                let b = proptest::collection::vec(prop_oneof![Just(0.0), Just(1.0), Just(0.5)], h * w)
                    .prop_map(move |c| grid(h, w, &c));
                (Just(a), b)
            })
        ) {
            let (h, w) = a.dims();
            let (ca, cb) = (classes(&a), classes(&b));
            let max = h - 1 + w - 1;
            let occ = brute_directed(&ca, &cb, w, true, max) + brute_directed(&cb, &ca, w, true, max);
            let free = brute_directed(&ca, &cb, w, false, max) + brute_directed(&cb, &ca, w, false, max);
            let s = image_similarity(&a, &b).unwrap();
            prop_assert!((s.occupied - occ).abs() < 1e-12);
            prop_assert!((s.free - free).abs() < 1e-12);
            let t = image_similarity(&b, &a).unwrap();
            prop_assert!((s.total - t.total).abs() < 1e-12);
            prop_assert!(s.total >= 0.0);
        }

        #[test]
        fn self_similarity_is_zero(a in random_grid()) {
            prop_assert_eq!(image_similarity(&a, &a).unwrap().total, 0.0);
        }

        #[test]
        fn top3_never_worse_than_most_likely(
            gt in proptest::collection::vec(prop_oneof![Just(0.0), Just(1.0)], 6),
            preds in proptest::collection::vec((0.0f64..1.0, proptest::collection::vec(0.0f64..=1.0, 6)), 1..6),
        ) {
            let gt = grid(2, 3, &gt);
            let grids: Vec<OccupancyGrid<f64>> = preds.iter().map(|p| grid(2, 3, &p.1)).collect();
            let cands: Vec<(f64, &OccupancyGrid<f64>)> = preds.iter().map(|p| p.0).zip(&grids).collect();
            let m = EvalMask::full(2, 3);
            let first = top3_indices(&cands.iter().map(|c| c.0).collect::<Vec<_>>())[0];
            let lead = cands[first].1;
            let a = top3_metrics(&cands, &gt, &m, Metric::Accuracy).unwrap();
            prop_assert!(a.overall.unwrap() >= accuracy(lead, &gt, &m).unwrap().overall.unwrap());
            let e = top3_metrics(&cands, &gt, &m, Metric::Mse).unwrap();
            prop_assert!(e.overall.unwrap() <= mse(lead, &gt, &m).unwrap().overall.unwrap());
            let s = top3_metrics(&cands, &gt, &m, Metric::ImageSimilarity).unwrap();
            prop_assert!(s.overall.unwrap() <= image_similarity_masked(lead, &gt, &m).unwrap().total);
        }
    }
}
