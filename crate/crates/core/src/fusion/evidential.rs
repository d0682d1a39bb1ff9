use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mass over the focal sets {O}, {F} and {O, F}; the empty set carries none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefMass<T> {
    occupied: T,
    free: T,
    unknown: T,
}

fn in_unit<T: Scalar>(v: T) -> bool {
    v >= T::zero() && v <= T::one()
}

impl<T: Scalar> BeliefMass<T> {
    pub fn new(occupied: T, free: T, unknown: T) -> Result<Self> {
        if !(in_unit(occupied) && in_unit(free) && in_unit(unknown)) {
            return Err(Error::InvalidMass(format!(
                "components ({occupied:?}, {free:?}, {unknown:?}) must lie in [0, 1]"
            )));
        }
        let total = occupied + free + unknown;
        let diff = if total > T::one() {
            total - T::one()
        } else {
            T::one() - total
        };
        if diff > T::tolerance() {
            return Err(Error::InvalidMass(format!(
                "components ({occupied:?}, {free:?}, {unknown:?}) sum to {total:?}"
            )));
        }
        Ok(Self {
            occupied,
            free,
            unknown,
        })
    }

    /// Total ignorance: all mass on {O, F}.
    pub fn vacuous() -> Self {
        Self {
            occupied: T::zero(),
            free: T::zero(),
            unknown: T::one(),
        }
    }

    pub fn occupied(&self) -> T {
        self.occupied
    }

    pub fn free(&self) -> T {
        self.free
    }

    pub fn unknown(&self) -> T {
        self.unknown
    }

    /// Conflict `m1(O) m2(F) + m1(F) m2(O)` with `other`.
    pub fn conflict(&self, other: &Self) -> T {
        self.occupied * other.free + self.free * other.occupied
    }
}

/// Discounted mass `(delta p, delta (1 - p), 1 - delta)`.
pub fn to_belief_mass<T: Scalar>(p: T, delta: T) -> Result<BeliefMass<T>> {
    if !in_unit(p) {
        return Err(Error::InvalidMass(format!("occupancy probability {p:?} outside [0, 1]")));
    }
    if !in_unit(delta) {
        return Err(Error::InvalidMass(format!("discount {delta:?} outside [0, 1]")));
    }
    Ok(BeliefMass {
        occupied: delta * p,
        free: delta * (T::one() - p),
        unknown: T::one() - delta,
    })
}

/// Dempster's rule of combination.
pub fn dempster_combine<T: Scalar>(a: &BeliefMass<T>, b: &BeliefMass<T>) -> Result<BeliefMass<T>> {
    let kappa = a.conflict(b);
    let norm = T::one() - kappa;
    if norm <= T::zero() {
        return Err(Error::TotalConflict {
            left: format!("{a:?}"),
            right: format!("{b:?}"),
        });
    }
    Ok(BeliefMass {
        occupied: (a.occupied * b.occupied + a.occupied * b.unknown + a.unknown * b.occupied) / norm,
        free: (a.free * b.free + a.free * b.unknown + a.unknown * b.free) / norm,
        unknown: a.unknown * b.unknown / norm,
    })
}

/// Pignistic probability of occupancy, `m(O) + m(O, F) / 2`.
pub fn pignistic<T: Scalar>(m: &BeliefMass<T>) -> T {
    m.occupied + m.unknown / (T::one() + T::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::exact::{q, Q};
    use proptest::prelude::*;

    fn close(a: &BeliefMass<f64>, b: (f64, f64, f64), tol: f64) -> bool {
        (a.occupied() - b.0).abs() <= tol
            && (a.free() - b.1).abs() <= tol
            && (a.unknown() - b.2).abs() <= tol
    }

    #[test]
    fn conversion_examples() {
        assert!(close(&to_belief_mass(1.0, 0.95).unwrap(), (0.95, 0.0, 0.05), 1e-15));
        assert!(close(&to_belief_mass(0.5, 0.95).unwrap(), (0.475, 0.475, 0.05), 1e-15));
        assert!(close(&to_belief_mass(0.0, 1.0).unwrap(), (0.0, 1.0, 0.0), 0.0));
        assert!(to_belief_mass(1.2, 0.95).is_err());
        assert!(to_belief_mass(0.2, -0.1).is_err());
    }

    #[test]
    fn combination_examples_exact() {
        let a = BeliefMass::new(q(19, 20), q(0, 1), q(1, 20)).unwrap();
        let c = dempster_combine(&a, &a).unwrap();
        assert_eq!((c.occupied(), c.free(), c.unknown()), (q(399, 400), q(0, 1), q(1, 400)));

        let a = BeliefMass::new(q(6, 10), q(3, 10), q(1, 10)).unwrap();
        let b = BeliefMass::new(q(3, 10), q(6, 10), q(1, 10)).unwrap();
        assert_eq!(a.conflict(&b), q(45, 100));
        let c = dempster_combine(&a, &b).unwrap();
        // (0.18 + 0.06 + 0.03) / 0.55 and 0.01 / 0.55.
        assert_eq!(c.occupied(), q(27, 55));
        assert_eq!(c.free(), q(27, 55));
        assert_eq!(c.unknown(), q(1, 55));
    }

    #[test]
    fn combination_examples_float() {
        let a = BeliefMass::new(0.95, 0.0, 0.05).unwrap();
        assert!(close(&dempster_combine(&a, &a).unwrap(), (0.9975, 0.0, 0.0025), 1e-12));
        let a = BeliefMass::new(0.6, 0.3, 0.1).unwrap();
        let b = BeliefMass::new(0.3, 0.6, 0.1).unwrap();
        let c = dempster_combine(&a, &b).unwrap();
        assert!(close(&c, (0.490909, 0.490909, 0.018182), 1e-6));
    }

    #[test]
    fn total_conflict_is_reported() {
        let a = BeliefMass::new(1.0, 0.0, 0.0).unwrap();
        let b = BeliefMass::new(0.0, 1.0, 0.0).unwrap();
        assert!(matches!(dempster_combine(&a, &b), Err(Error::TotalConflict { .. })));
    }

    #[test]
    fn pignistic_examples() {
        assert_eq!(pignistic(&BeliefMass::<f64>::vacuous()), 0.5);
        assert_eq!(pignistic(&BeliefMass::new(1.0, 0.0, 0.0).unwrap()), 1.0);
        assert_eq!(pignistic(&BeliefMass::new(q(1, 2), q(3, 10), q(2, 10)).unwrap()), q(3, 5));
        assert!((pignistic(&BeliefMass::new(0.5f64, 0.3, 0.2).unwrap()) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn invalid_masses() {
        assert!(BeliefMass::new(0.5, 0.6, 0.0).is_err());
        assert!(BeliefMass::new(-0.1, 0.6, 0.5).is_err());
        assert!(BeliefMass::new(q(1, 3), q(1, 3), q(1, 4)).is_err());
        assert!(BeliefMass::new(q(1, 3), q(1, 3), q(1, 3)).is_ok());
    }

    fn mass() -> impl Strategy<Value = BeliefMass<f64>> {
        (0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, b)| {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            BeliefMass::new(lo, hi - lo, 1.0 - hi).unwrap()
        })
    }

    /// Masses with small denominators and unknown > 0, so no total conflict.
    fn exact_mass() -> impl Strategy<Value = BeliefMass<Q>> {
        (0i64..12, 0i64..12).prop_map(|(a, b)| {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            BeliefMass::new(q(lo, 12), q(hi - lo, 12), q(12 - hi, 12)).unwrap()
        })
    }

    fn exact_eq(a: &BeliefMass<Q>, b: &BeliefMass<Q>) -> bool {
        a == b
    }

    fn near(a: &BeliefMass<f64>, b: &BeliefMass<f64>) -> bool {
        close(a, (b.occupied(), b.free(), b.unknown()), 1e-9)
    }

    proptest! {
        #[test]
        fn commutative(a in mass(), b in mass()) {
            prop_assume!(a.conflict(&b) < 1.0 - 1e-6);
            prop_assert!(near(&dempster_combine(&a, &b).unwrap(), &dempster_combine(&b, &a).unwrap()));
        }

        #[test]
        fn associative(a in mass(), b in mass(), c in mass()) {
            let ab = dempster_combine(&a, &b);
            let bc = dempster_combine(&b, &c);
            prop_assume!(a.conflict(&b) < 0.9 && b.conflict(&c) < 0.9);
            let (ab, bc) = (ab.unwrap(), bc.unwrap());
            prop_assume!(ab.conflict(&c) < 0.9 && a.conflict(&bc) < 0.9);
            let left = dempster_combine(&ab, &c).unwrap();
            let right = dempster_combine(&a, &bc).unwrap();
            prop_assert!(near(&left, &right), "{left:?} vs {right:?}");
        }

        #[test]
        fn associative_exactly(a in exact_mass(), b in exact_mass(), c in exact_mass()) {
            prop_assume!(a.unknown() > q(0, 1) || b.unknown() > q(0, 1) || c.unknown() > q(0, 1));
            let Ok(ab) = dempster_combine(&a, &b) else { return Ok(()); };
            let Ok(bc) = dempster_combine(&b, &c) else { return Ok(()); };
            match (dempster_combine(&ab, &c), dempster_combine(&a, &bc)) {
                (Ok(l), Ok(r)) => prop_assert!(exact_eq(&l, &r)),
                (Err(_), Err(_)) => {}
                (l, r) => prop_assert!(false, "{l:?} vs {r:?}"),
            }
        }

        #[test]
        fn vacuous_is_identity(a in mass()) {
            let v = BeliefMass::vacuous();
            prop_assert!(near(&dempster_combine(&a, &v).unwrap(), &a));
            prop_assert!(near(&dempster_combine(&v, &a).unwrap(), &a));
        }

        #[test]
        fn combination_stays_valid(a in mass(), b in mass()) {
            prop_assume!(a.conflict(&b) < 1.0 - 1e-6);
            let c = dempster_combine(&a, &b).unwrap();
            prop_assert!(BeliefMass::new(c.occupied(), c.free(), c.unknown()).is_ok());
        }

        #[test]
        fn pignistic_of_discounted_probability(p in 0.0f64..=1.0, delta in 0.0f64..=1.0) {
            let m = to_belief_mass(p, delta).unwrap();
            let bet = pignistic(&m);
            prop_assert!((0.0..=1.0).contains(&bet));
            prop_assert!((bet - (delta * p + (1.0 - delta) / 2.0)).abs() < 1e-12);
            let exact = pignistic(&to_belief_mass(p, 1.0).unwrap());
            prop_assert!((exact - p).abs() < 1e-15);
        }
    }
}
