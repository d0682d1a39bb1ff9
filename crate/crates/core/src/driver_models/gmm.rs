use serde::{Deserialize, Serialize};

use super::kmeans::{KMeans, KMeansConfig};
use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Convergence threshold on the gain in mean per-sample log-likelihood.
    pub tolerance: f64,
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            k: 10,
            max_iter: 500,
            tolerance: 1e-6,
            variance_floor: 1e-6,
            seed: 0,
        }
    }
}

/// Diagonal-covariance Gaussian mixture fitted by EM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm<T> {
    weights: Vec<T>,
    means: Vec<Vec<T>>,
    variances: Vec<Vec<T>>,
    /// Mean per-sample log-likelihood at each E-step.
    ll_trace: Vec<T>,
    reseeded: usize,
}

fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if m == T::neg_infinity() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<T>().ln()
}

impl<T: Real> Gmm<T> {
    pub fn fit(data: &[Vec<T>], config: &GmmConfig) -> Result<Self> {
        let k = config.k;
        let km = KMeans::fit(
            data,
            &KMeansConfig {
                k,
                max_iter: 300,
                seed: config.seed,
            },
        )?;
        let n = data.len();
        let d = km.dim();
        let floor = lit::<T>(config.variance_floor);

        let global_var = {
            let mean: Vec<T> = (0..d)
                .map(|j| data.iter().map(|x| x[j]).sum::<T>() / count(n))
                .collect();
            (0..d)
                .map(|j| {
                    let v = data.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<T>() / count(n);
                    v.max(floor)
                })
                .collect::<Vec<T>>()
        };

        let mut means = km.centroids().to_vec();
        let mut weights = vec![T::zero(); k];
        let mut variances = vec![vec![T::zero(); d]; k];
        let mut sizes = vec![0usize; k];
        for x in data {
            let z = km.assign(x);
            sizes[z] += 1;
            for j in 0..d {
                variances[z][j] = variances[z][j] + (x[j] - means[z][j]).powi(2);
            }
        }
        for z in 0..k {
            if sizes[z] > 1 {
                for v in variances[z].iter_mut() {
                    *v = (*v / count(sizes[z])).max(floor);
                }
            } else {
                variances[z] = global_var.clone();
            }
            weights[z] = count::<T>(sizes[z].max(1)) / count(n);
        }
        let wsum: T = weights.iter().copied().sum();
        weights.iter_mut().for_each(|w| *w = *w / wsum);

        let mut model = Self {
            weights,
            means: std::mem::take(&mut means),
            variances,
            ll_trace: Vec::new(),
            reseeded: 0,
        };
        let tol = lit::<T>(config.tolerance);
        let mut resp = vec![vec![T::zero(); k]; n];
        let mut point_ll = vec![T::zero(); n];
        for _ in 0..config.max_iter.max(1) {
            // E-step.
            let mut total = T::zero();
            for (i, x) in data.iter().enumerate() {
                let logs = model.component_log_densities(x);
                let lse = log_sum_exp(&logs);
                point_ll[i] = lse;
                total = total + lse;
                for (r, &l) in resp[i].iter_mut().zip(&logs) {
                    *r = (l - lse).exp();
                }
            }
            let mean_ll = total / count(n);
            if !mean_ll.is_finite() {
                return Err(Error::NonFinite("GMM log-likelihood".into()));
            }
            let converged = model
                .ll_trace
                .last()
                .is_some_and(|&prev| mean_ll - prev < tol);
            model.ll_trace.push(mean_ll);
            if converged {
                break;
            }

            // M-step.
            let mut nk = vec![T::zero(); k];
            for r in &resp {
                for (a, &b) in nk.iter_mut().zip(r) {
                    *a = *a + b;
                }
            }
            let tiny = lit::<T>(1e-10);
            for z in 0..k {
                if nk[z] <= tiny {
                    // Degenerate component: restart it at the worst-explained point.
                    let worst = (0..n)
                        .min_by(|&a, &b| point_ll[a].partial_cmp(&point_ll[b]).unwrap())
                        .unwrap();
                    model.means[z] = data[worst].clone();
                    model.variances[z] = global_var.clone();
                    model.weights[z] = T::one() / count(n);
                    model.reseeded += 1;
                    continue;
                }
                let mut mean = vec![T::zero(); d];
                for (r, x) in resp.iter().zip(data) {
                    for (m, &v) in mean.iter_mut().zip(x) {
                        *m = *m + r[z] * v;
                    }
                }
                mean.iter_mut().for_each(|m| *m = *m / nk[z]);
                let mut var = vec![T::zero(); d];
                for (r, x) in resp.iter().zip(data) {
                    for ((s, &v), &m) in var.iter_mut().zip(x).zip(&mean) {
                        *s = *s + r[z] * (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s = (*s / nk[z]).max(floor));
                model.means[z] = mean;
                model.variances[z] = var;
                model.weights[z] = nk[z] / count(n);
            }
            let wsum: T = model.weights.iter().copied().sum();
            model.weights.iter_mut().for_each(|w| *w = *w / wsum);
        }
        Ok(model)
    }

    pub fn from_parts(weights: Vec<T>, means: Vec<Vec<T>>, variances: Vec<Vec<T>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || variances.len() != k {
            return Err(Error::Config("mixture parts disagree on K".into()));
        }
        let d = means[0].len();
        if means.iter().chain(&variances).any(|v| v.len() != d) {
            return Err(Error::Config("mixture parts disagree on dimension".into()));
        }
        if variances.iter().flatten().any(|&v| !(v > T::zero())) {
            return Err(Error::Config("mixture variances must be positive".into()));
        }
        Ok(Self {
            weights,
            means,
            variances,
            ll_trace: Vec::new(),
            reseeded: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<T>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<T>] {
        &self.variances
    }

    pub fn ll_trace(&self) -> &[T] {
        &self.ll_trace
    }

    /// Number of components restarted after becoming empty.
    pub fn reseeded(&self) -> usize {
        self.reseeded
    }

    /// `ln w_z + ln N(x; mu_z, diag(var_z))` for every component.
    fn component_log_densities(&self, x: &[T]) -> Vec<T> {
        let ln_2pi = lit::<T>((2.0 * std::f64::consts::PI).ln());
        let half = lit::<T>(0.5);
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .map(|(&w, (m, v))| {
                let q: T = x
                    .iter()
                    .zip(m.iter().zip(v))
                    .map(|(&xi, (&mi, &vi))| ln_2pi + vi.ln() + (xi - mi) * (xi - mi) / vi)
                    .sum();
                w.ln() - half * q
            })
            .collect()
    }

    pub fn log_likelihood(&self, x: &[T]) -> T {
        log_sum_exp(&self.component_log_densities(x))
    }

    /// Component responsibilities; they sum to one.
    pub fn posterior(&self, x: &[T]) -> Vec<T> {
        let logs = self.component_log_densities(x);
        let lse = log_sum_exp(&logs);
        let mut r: Vec<T> = logs.iter().map(|&l| (l - lse).exp()).collect();
        let s: T = r.iter().copied().sum();
        r.iter_mut().for_each(|v| *v = *v / s);
        r
    }
}
