use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{count, Real};

/// Featurewise z-scoring fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<T> {
    mean: Vec<T>,
    std: Vec<T>,
}

impl<T: Real> Standardizer<T> {
    /// Population mean and standard deviation per feature. Features whose
    /// deviation is (numerically) zero get a deviation of 1.
    pub fn fit(data: &[Vec<T>]) -> Result<Self> {
        let first = data.first().ok_or(Error::Empty("standardizer training set"))?;
        let d = first.len();
        if let Some(bad) = data.iter().find(|x| x.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: (1, d),
                actual: (1, bad.len()),
            });
        }
        let n = count::<T>(data.len());
        let mut mean = vec![T::zero(); d];
        for x in data {
            for (m, &v) in mean.iter_mut().zip(x) {
                *m = *m + v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / n);
        let mut var = vec![T::zero(); d];
        for x in data {
            for ((s, &v), &m) in var.iter_mut().zip(x).zip(&mean) {
                *s = *s + (v - m) * (v - m);
            }
        }
        let floor = T::epsilon().sqrt();
        let std = var
            .into_iter()
            .zip(&mean)
            .map(|(s, &m)| {
                let sd = (s / n).sqrt();
                if sd <= floor * (T::one() + m.abs()) {
                    T::one()
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    /// Rebuilds a standardizer from stored statistics.
    pub fn from_parts(mean: Vec<T>, std: Vec<T>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::DimensionMismatch {
                expected: (1, mean.len()),
                actual: (1, std.len()),
            });
        }
        if std.iter().any(|&s| !(s > T::zero())) {
            return Err(Error::Config("standard deviations must be positive".into()));
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn std(&self) -> &[T] {
        &self.std
    }

    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        self.check(x)?;
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect())
    }

    pub fn invert(&self, z: &[T]) -> Result<Vec<T>> {
        self.check(z)?;
        Ok(z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (&m, &s))| v * s + m)
            .collect())
    }

    fn check(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: (1, self.dim()),
                actual: (1, x.len()),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_set_is_an_error() {
        assert!(matches!(Standardizer::<f64>::fit(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn single_sample_maps_to_zero() {
        let x = vec![3.0, -2.0, 7.5];
        let s = Standardizer::fit(std::slice::from_ref(&x)).unwrap();
        assert_eq!(s.std(), &[1.0, 1.0, 1.0]);
        assert_eq!(s.apply(&x).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn two_values_become_plus_minus_one() {
        let s = Standardizer::fit(&[vec![0.0f64], vec![2.0]]).unwrap();
        assert_eq!(s.apply(&[0.0]).unwrap(), vec![-1.0]);
        assert_eq!(s.apply(&[2.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn works_in_single_precision() {
        let s = Standardizer::fit(&[vec![0.0f32], vec![2.0]]).unwrap();
        assert_eq!(s.apply(&[2.0]).unwrap(), vec![1.0f32]);
    }

    #[test]
    fn dimension_checked() {
        let s = Standardizer::fit(&[vec![0.0f64, 1.0]]).unwrap();
        assert!(s.apply(&[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn invert_undoes_apply(
            train in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 4), 1..20),
            x in proptest::collection::vec(-100.0f64..100.0, 4),
        ) {
            let s = Standardizer::fit(&train).unwrap();
            let back = s.invert(&s.apply(&x).unwrap()).unwrap();
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
            prop_assert!(s.std().iter().all(|&v| v > 0.0));
        }
    }
}
