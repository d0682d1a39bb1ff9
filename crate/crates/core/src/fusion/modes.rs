use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// One latent class per visible driver and the product of their priors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeAssignment<T> {
    pub classes: Vec<usize>,
    pub likelihood: T,
}

/// Product of the selected prior entries.
pub fn joint_likelihood<T: Real, P: AsRef<[T]>>(classes: &[usize], priors: &[P]) -> Result<T> {
    if classes.len() != priors.len() {
        return Err(Error::Config(format!(
            "{} classes given for {} drivers",
            classes.len(),
            priors.len()
        )));
    }
    classes
        .iter()
        .zip(priors)
        .try_fold(T::one(), |acc, (&z, p)| {
            p.as_ref()
                .get(z)
                .map(|&w| acc * w)
                .ok_or_else(|| Error::Config(format!("class {z} out of range")))
        })
}

struct Node<T> {
    likelihood: T,
    classes: Vec<usize>,
    ranks: Vec<usize>,
}

impl<T: Real> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Real> Eq for Node<T> {}

impl<T: Real> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> Ord for Node<T> {
    /// Max-heap order: larger likelihood first, then smaller class vector.
    fn cmp(&self, other: &Self) -> Ordering {
        self.likelihood
            .partial_cmp(&other.likelihood)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.classes.cmp(&self.classes))
    }
}

/// The `k` most likely joint assignments, in non-increasing likelihood with
/// ties broken by lexicographic class indices.
///
/// Best-first search over per-driver classes sorted by prior: the rank
/// vector `r` is expanded to `r + e_i` for every driver `i` at or after its
/// last nonzero rank, so every vector has exactly one parent and is never
/// more likely than it.
pub fn top_k_assignments<T: Real, P: AsRef<[T]>>(priors: &[P], k: usize) -> Result<Vec<ModeAssignment<T>>> {
    if k == 0 {
        return Err(Error::Config("top-k needs k >= 1".into()));
    }
    let order: Vec<Vec<usize>> = priors
        .iter()
        .map(|p| {
            let p = p.as_ref();
            let mut idx: Vec<usize> = (0..p.len()).collect();
            idx.sort_by(|&a, &b| p[b].partial_cmp(&p[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
            idx
        })
        .collect();
    if let Some(i) = order.iter().position(Vec::is_empty) {
        return Err(Error::Config(format!("driver {i} has no classes")));
    }
    let node = |ranks: Vec<usize>| -> Node<T> {
        let classes: Vec<usize> = ranks.iter().zip(&order).map(|(&r, o)| o[r]).collect();
        let likelihood = classes
            .iter()
            .zip(priors)
            .fold(T::one(), |acc, (&z, p)| acc * p.as_ref()[z]);
        Node {
            likelihood,
            classes,
            ranks,
        }
    };
    let mut heap = BinaryHeap::new();
    heap.push(node(vec![0; priors.len()]));
    let mut out = Vec::with_capacity(k);
    while let Some(best) = heap.pop() {
        if best.likelihood <= T::zero() {
            // Everything not yet emitted has likelihood zero; take those in
            // lexicographic order directly.
            fill_zero_ties(priors, &mut out, k);
            break;
        }
        let start = best.ranks.iter().rposition(|&r| r > 0).unwrap_or(0);
        for i in start..best.ranks.len() {
            if best.ranks[i] + 1 < order[i].len() {
                let mut next = best.ranks.clone();
                next[i] += 1;
                heap.push(node(next));
            }
        }
        out.push(ModeAssignment {
            classes: best.classes,
            likelihood: best.likelihood,
        });
        if out.len() == k {
            break;
        }
    }
    Ok(out)
}

fn fill_zero_ties<T: Real, P: AsRef<[T]>>(priors: &[P], out: &mut Vec<ModeAssignment<T>>, k: usize) {
    let emitted: Vec<Vec<usize>> = out.iter().map(|m| m.classes.clone()).collect();
    let mut classes = vec![0; priors.len()];
    loop {
        if !emitted.contains(&classes) {
            out.push(ModeAssignment {
                classes: classes.clone(),
                likelihood: T::zero(),
            });
            if out.len() == k {
                return;
            }
        }
        // Odometer increment, last driver fastest.
        let mut i = classes.len();
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            classes[i] += 1;
            if classes[i] < priors[i].as_ref().len() {
                break;
            }
            classes[i] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(priors: &[Vec<f64>], k: usize) -> Vec<ModeAssignment<f64>> {
        let mut all = vec![Vec::<usize>::new()];
        for p in priors {
            all = all
                .into_iter()
                .flat_map(|prefix| {
                    (0..p.len()).map(move |z| {
                        let mut v = prefix.clone();
                        v.push(z);
                        v
                    })
                })
                .collect();
        }
        let mut scored: Vec<ModeAssignment<f64>> = all
            .into_iter()
            .map(|classes| ModeAssignment {
                likelihood: joint_likelihood(&classes, priors).unwrap(),
                classes,
            })
            .collect();
        scored.sort_by(|a, b| {
            b.likelihood
                .partial_cmp(&a.likelihood)
                .unwrap()
                .then_with(|| a.classes.cmp(&b.classes))
        });
        scored.truncate(k);
        scored
    }

    #[test]
    fn likelihood_examples() {
        assert_eq!(joint_likelihood(&[0], &[vec![0.7, 0.3]]).unwrap(), 0.7);
        let priors = vec![vec![0.5, 0.5], vec![0.8, 0.2]];
        assert!((joint_likelihood(&[0, 0], &priors).unwrap() - 0.4f64).abs() < 1e-15);
        assert_eq!(joint_likelihood(&[0, 1], &[vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap(), 0.0);
        assert!(joint_likelihood(&[3], &[vec![1.0f64]]).is_err());
    }

    #[test]
    fn single_driver_in_prior_order() {
        let out = top_k_assignments(&[vec![0.3, 0.6, 0.1]], 3).unwrap();
        let l: Vec<f64> = out.iter().map(|m| m.likelihood).collect();
        assert_eq!(l, vec![0.6, 0.3, 0.1]);
        assert_eq!(out[0].classes, vec![1]);
    }

    #[test]
    fn two_drivers() {
        let out = top_k_assignments(&[vec![0.5, 0.5], vec![0.8, 0.2]], 3).unwrap();
        let l: Vec<f64> = out.iter().map(|m| m.likelihood).collect();
        assert!((l[0] - 0.4).abs() < 1e-15 && (l[1] - 0.4).abs() < 1e-15 && (l[2] - 0.1).abs() < 1e-15);
        assert_eq!(out[0].classes, vec![0, 0]);
        assert_eq!(out[1].classes, vec![1, 0]);
    }

    #[test]
    fn no_drivers_and_small_spaces() {
        let none: Vec<Vec<f64>> = Vec::new();
        let out = top_k_assignments(&none, 3).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].likelihood, 1.0);
        assert_eq!(top_k_assignments(&[vec![0.5, 0.5]], 5).unwrap().len(), 2);
        assert!(top_k_assignments(&[vec![1.0]], 0).is_err());
        assert!(top_k_assignments(&[Vec::<f64>::new()], 1).is_err());
    }

    #[test]
    fn one_hot_priors_do_not_enumerate_the_space() {
        // 12 drivers with 10 classes each: 10^12 joint assignments.
        let p: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let mut v = vec![0.0; 10];
                v[(i * 3) % 10] = 1.0;
                v
            })
            .collect();
        let out = top_k_assignments(&p, 3).unwrap();
        assert_eq!(out[0].likelihood, 1.0);
        assert_eq!(out[1].classes, vec![0; 12]);
        assert_eq!(out[2].classes, [vec![0; 11], vec![1]].concat());
        assert_eq!(out[2].likelihood, 0.0);
    }

    fn priors(drivers: usize, classes: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(
            proptest::collection::vec(prop_oneof![Just(0.0), Just(0.25), 0.0f64..1.0], classes)
                .prop_map(|v| {
                    let s: f64 = v.iter().sum();
                    if s == 0.0 {
                        vec![1.0 / v.len() as f64; v.len()]
                    } else {
                        v.into_iter().map(|x| x / s).collect()
                    }
                }),
            drivers,
        )
    }

    proptest! {
        #[test]
        fn four_by_five_matches_brute_force(p in priors(4, 5)) {
            prop_assert_eq!(top_k_assignments(&p, 3).unwrap(), brute(&p, 3));
        }

        #[test]
        fn matches_brute_force_on_small_spaces(
            p in (1usize..5, 1usize..7).prop_flat_map(|(d, c)| priors(d, c)),
            k in 1usize..30,
        ) {
            prop_assert_eq!(top_k_assignments(&p, k).unwrap(), brute(&p, k));
        }
    }
}
