use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.85,
            validation: 0.05,
            test: 0.10,
        }
    }
}

/// Partition of ego ids into train, validation and test sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    assignment: BTreeMap<i64, Split>,
    pub fractions: SplitFractions,
}

impl DatasetSplit {
    /// Shuffles the distinct ego ids with `seed` and cuts them by `fractions`.
    pub fn new<I: IntoIterator<Item = i64>>(
        ego_ids: I,
        fractions: SplitFractions,
        seed: u64,
    ) -> Result<Self> {
        let f = fractions;
        if [f.train, f.validation, f.test].iter().any(|&v| !(v >= 0.0))
            || ((f.train + f.validation + f.test) - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "split fractions {f:?} must be non-negative and sum to 1"
            )));
        }
        let mut ids: Vec<i64> = ego_ids.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n = ids.len();
        let n_train = (f.train * n as f64).round() as usize;
        let n_val = ((f.validation * n as f64).round() as usize).min(n - n_train.min(n));
        let assignment = ids
            .into_iter()
            .enumerate()
            .map(|(i, id)| {
                let s = if i < n_train {
                    Split::Train
                } else if i < n_train + n_val {
                    Split::Validation
                } else {
                    Split::Test
                };
                (id, s)
            })
            .collect();
        Ok(Self {
            assignment,
            fractions,
        })
    }

    pub fn split_of(&self, ego_id: i64) -> Option<Split> {
        self.assignment.get(&ego_id).copied()
    }

    pub fn ids(&self, split: Split) -> impl Iterator<Item = i64> + '_ {
        self.assignment
            .iter()
            .filter(move |(_, &s)| s == split)
            .map(|(&id, _)| id)
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_fractions() {
        let s = DatasetSplit::new(0..100, SplitFractions::default(), 3).unwrap();
        assert_eq!(s.ids(Split::Train).count(), 85);
        assert_eq!(s.ids(Split::Validation).count(), 5);
        assert_eq!(s.ids(Split::Test).count(), 10);
    }

    #[test]
    fn bad_fractions_rejected() {
        let f = SplitFractions {
            train: 0.9,
            validation: 0.2,
            test: 0.0,
        };
        assert!(DatasetSplit::new(0..3, f, 0).is_err());
    }

    proptest! {
        #[test]
        fn disjoint_exhaustive_and_stable(ids in proptest::collection::btree_set(-1000i64..1000, 0..200), seed: u64) {
            let a = DatasetSplit::new(ids.iter().copied(), SplitFractions::default(), seed).unwrap();
            let b = DatasetSplit::new(ids.iter().copied(), SplitFractions::default(), seed).unwrap();
            prop_assert_eq!(&a, &b);
            let total = a.ids(Split::Train).count() + a.ids(Split::Validation).count() + a.ids(Split::Test).count();
            prop_assert_eq!(total, ids.len());
            for id in &ids {
                prop_assert!(a.split_of(*id).is_some());
            }
        }
    }
}
