use crate::scalar::Real;

/// Static 2-d tree for exact nearest-neighbour queries.
#[derive(Debug, Clone)]
pub struct KdTree<T> {
    points: Vec<[T; 2]>,
    /// Point indices in tree order; the median of each range is its node.
    order: Vec<usize>,
}

impl<T: Real> KdTree<T> {
    pub fn new(points: Vec<[T; 2]>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(&points, &mut order, 0);
        Self { points, order }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> [T; 2] {
        self.points[i]
    }

    /// Index and squared distance of the nearest point; ties go to the
    /// lowest index.
    pub fn nearest(&self, q: [T; 2]) -> Option<(usize, T)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, T::infinity());
        self.search(&self.order, 0, q, &mut best);
        Some(best)
    }

    fn search(&self, range: &[usize], axis: usize, q: [T; 2], best: &mut (usize, T)) {
        if range.is_empty() {
            return;
        }
        let mid = range.len() / 2;
        let i = range[mid];
        let p = self.points[i];
        let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
        if d < best.1 || (d == best.1 && i < best.0) {
            *best = (i, d);
        }
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < T::zero() {
            (&range[..mid], &range[mid + 1..])
        } else {
            (&range[mid + 1..], &range[..mid])
        };
        let next = 1 - axis;
        self.search(near, next, q, best);
        // Equality keeps tied points on the far side reachable.
        if diff * diff <= best.1 {
            self.search(far, next, q, best);
        }
    }
}

fn build<T: Real>(points: &[[T; 2]], order: &mut [usize], axis: usize) {
    if order.len() <= 1 {
        return;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis]
            .partial_cmp(&points[b][axis])
            .unwrap()
            .then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    build(points, left, 1 - axis);
    build(points, &mut right[1..], 1 - axis);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[[f64; 2]], q: [f64; 2]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    #[test]
    fn empty_tree() {
        assert!(KdTree::<f64>::new(Vec::new()).nearest([0.0, 0.0]).is_none());
    }

    #[test]
    fn lattice_ties_resolve_to_lowest_index() {
        let pts: Vec<[f64; 2]> = (0..5).flat_map(|i| (0..5).map(move |j| [i as f64, j as f64])).collect();
        let t = KdTree::new(pts.clone());
        for qx in 0..9 {
            for qy in 0..9 {
                let q = [qx as f64 * 0.5, qy as f64 * 0.5];
                assert_eq!(t.nearest(q).unwrap(), brute(&pts, q));
            }
        }
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            pts in proptest::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 1..150),
            qs in proptest::collection::vec((-25.0f64..25.0, -25.0f64..25.0), 1..20),
        ) {
            let pts: Vec<[f64; 2]> = pts.into_iter().map(|(x, y)| [x, y]).collect();
            let t = KdTree::new(pts.clone());
            for (x, y) in qs {
                prop_assert_eq!(t.nearest([x, y]).unwrap(), brute(&pts, [x, y]));
            }
        }
    }
}
