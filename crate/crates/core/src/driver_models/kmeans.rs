use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{count, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 10,
            max_iter: 300,
            seed: 0,
        }
    }
}

/// Lloyd's k-means with k-means++ seeding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeans<T> {
    centroids: Vec<Vec<T>>,
    /// Within-cluster sum of squares after each assignment step.
    objective_trace: Vec<T>,
}

pub(crate) fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn nearest<T: Real>(centroids: &[Vec<T>], x: &[T]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

impl<T: Real> KMeans<T> {
    pub fn fit(data: &[Vec<T>], config: &KMeansConfig) -> Result<Self> {
        let k = config.k;
        if k < 1 || k > data.len() {
            return Err(Error::Config(format!(
                "k-means needs 1 <= K <= {} samples, got K = {k}",
                data.len()
            )));
        }
        let d = data[0].len();
        if data.iter().any(|x| x.len() != d) {
            return Err(Error::Config("k-means samples differ in dimension".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut centroids = vec![data[rng.random_range(0..data.len())].clone()];
        let mut d2: Vec<f64> = data
            .iter()
            .map(|x| sq_dist(x, &centroids[0]).to_f64().unwrap_or(0.0))
            .collect();
        while centroids.len() < k {
            let total: f64 = d2.iter().sum();
            let pick = if total > 0.0 {
                let mut u = rng.random_range(0.0..total);
                let mut pick = data.len() - 1;
                for (i, &w) in d2.iter().enumerate() {
                    if u < w {
                        pick = i;
                        break;
                    }
                    u -= w;
                }
                pick
            } else {
                rng.random_range(0..data.len())
            };
            centroids.push(data[pick].clone());
            let c = centroids.last().unwrap();
            for (w, x) in d2.iter_mut().zip(data) {
                *w = w.min(sq_dist(x, c).to_f64().unwrap_or(0.0));
            }
        }

        let mut assignment: Vec<usize> = vec![usize::MAX; data.len()];
        let mut objective_trace = Vec::new();
        for _ in 0..config.max_iter.max(1) {
            let mut changed = false;
            let mut objective = T::zero();
            for (a, x) in assignment.iter_mut().zip(data) {
                let (i, dist) = nearest(&centroids, x);
                objective = objective + dist;
                if *a != i {
                    *a = i;
                    changed = true;
                }
            }
            objective_trace.push(objective);
            if !changed {
                break;
            }
            let mut sums = vec![vec![T::zero(); d]; k];
            let mut sizes = vec![0usize; k];
            for (&a, x) in assignment.iter().zip(data) {
                sizes[a] += 1;
                for (s, &v) in sums[a].iter_mut().zip(x) {
                    *s = *s + v;
                }
            }
            for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&sizes) {
                // An empty cluster keeps its previous centroid.
                if n > 0 {
                    let n = count::<T>(n);
                    *c = s.into_iter().map(|v| v / n).collect();
                }
            }
        }
        Ok(Self {
            centroids,
            objective_trace,
        })
    }

    pub fn from_centroids(centroids: Vec<Vec<T>>) -> Result<Self> {
        let d = centroids.first().ok_or(Error::Empty("k-means centroids"))?.len();
        if centroids.iter().any(|c| c.len() != d) {
            return Err(Error::Config("centroids differ in dimension".into()));
        }
        Ok(Self {
            centroids,
            objective_trace: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }

    pub fn centroids(&self) -> &[Vec<T>] {
        &self.centroids
    }

    pub fn objective_trace(&self) -> &[T] {
        &self.objective_trace
    }

    /// Nearest centroid; ties go to the lowest index.
    pub fn assign(&self, x: &[T]) -> usize {
        nearest(&self.centroids, x).0
    }
}
