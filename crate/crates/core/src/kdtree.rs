//! Exact k-nearest-neighbour search over a static point set.
//!
//! Nodes split on the dimension of largest spread at the median; leaves hold
//! up to [`LEAF_SIZE`] points. Neighbours at equal distance are ordered by
//! their original index, so results are reproducible and match a brute-force
//! scan exactly.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::scalar::{squared_distance, Scalar};

pub const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node<T> {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: T, left: usize, right: usize },
}

/// A neighbour returned by [`KdTree::knn`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor<T> {
    /// Position of the point in the input order.
    pub index: usize,
    pub squared_distance: T,
}

impl<T: Scalar> Neighbor<T> {
    pub fn distance(&self) -> T {
        self.squared_distance.sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct KdTree<T> {
    dim: usize,
    /// Coordinates reordered so every leaf is contiguous.
    coords: Vec<T>,
    /// Original index of each reordered point.
    order: Vec<usize>,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> KdTree<T> {
    /// Builds a tree over row-major `points` of dimension `dim`.
    pub fn build(points: &[T], dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        assert_eq!(points.len() % dim, 0, "points must form whole rows");
        let n = points.len() / dim;
        let mut order: Vec<usize> = (0..n).collect();
        let mut nodes = Vec::with_capacity(2 * n / LEAF_SIZE + 1);
        if n > 0 {
            build_node(points, dim, &mut order, 0, n, &mut nodes);
        }
        let mut coords = Vec::with_capacity(points.len());
        for &i in &order {
            coords.extend_from_slice(&points[i * dim..(i + 1) * dim]);
        }
        KdTree {
            dim,
            coords,
            order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of leaves; every point belongs to exactly one.
    pub fn leaf_ranges(&self) -> Vec<(usize, usize)> {
        self.nodes
            .iter()
            .filter_map(|n| match *n {
                Node::Leaf { start, end } => Some((start, end)),
                Node::Split { .. } => None,
            })
            .collect()
    }

    /// Original indices of the points stored in each leaf.
    pub fn leaf_members(&self) -> Vec<Vec<usize>> {
        self.leaf_ranges()
            .into_iter()
            .map(|(s, e)| self.order[s..e].to_vec())
            .collect()
    }

    /// The `min(k, n)` nearest points to `query`, sorted by increasing
    /// distance and then by index.
    pub fn knn(&self, query: &[T], k: usize) -> Vec<Neighbor<T>> {
        assert_eq!(query.len(), self.dim, "query dimension");
        let k = k.min(self.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        let mut out: Vec<Neighbor<T>> = heap
            .into_iter()
            .map(|c| Neighbor {
                index: c.index,
                squared_distance: c.d2,
            })
            .collect();
        out.sort_by(|a, b| cmp_key(a.squared_distance, a.index, b.squared_distance, b.index));
        out
    }

    fn search(&self, node: usize, q: &[T], k: usize, heap: &mut BinaryHeap<Candidate<T>>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for pos in start..end {
                    let p = &self.coords[pos * self.dim..(pos + 1) * self.dim];
                    let cand = Candidate {
                        d2: squared_distance(q, p),
                        index: self.order[pos],
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < T::zero() { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                let plane = diff * diff;
                if heap.len() < k || plane <= heap.peek().expect("heap is non-empty").d2 {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}

fn build_node<T: Scalar>(
    points: &[T],
    dim: usize,
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node<T>>,
) -> usize {
    let id = nodes.len();
    let len = end - start;
    let coord = |i: usize, j: usize| points[i * dim + j];
    let split_dim = if len > LEAF_SIZE {
        let mut best = (0, T::zero());
        for j in 0..dim {
            let (lo, hi) = order[start..end].iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &i| {
                (lo.min(coord(i, j)), hi.max(coord(i, j)))
            });
            if hi - lo > best.1 {
                best = (j, hi - lo);
            }
        }
        (best.1 > T::zero()).then_some(best.0)
    } else {
        None
    };
    let Some(split_dim) = split_dim else {
        nodes.push(Node::Leaf { start, end });
        return id;
    };
    let mid = len / 2;
    let slice = &mut order[start..end];
    slice.select_nth_unstable_by(mid, |&a, &b| {
        coord(a, split_dim)
            .partial_cmp(&coord(b, split_dim))
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let value = coord(slice[mid], split_dim);
    nodes.push(Node::Leaf { start, end });
    let left = build_node(points, dim, order, start, start + mid, nodes);
    let right = build_node(points, dim, order, start + mid, end, nodes);
    nodes[id] = Node::Split {
        dim: split_dim,
        value,
        left,
        right,
    };
    id
}

fn cmp_key<T: Scalar>(d2a: T, ia: usize, d2b: T, ib: usize) -> Ordering {
    d2a.partial_cmp(&d2b).unwrap_or(Ordering::Equal).then(ia.cmp(&ib))
}

#[derive(Debug, Clone, Copy)]
struct Candidate<T> {
    d2: T,
    index: usize,
}

impl<T: Scalar> PartialEq for Candidate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Candidate<T> {}

impl<T: Scalar> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Candidate<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_key(self.d2, self.index, other.d2, other.index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(points: &[f64], dim: usize, q: &[f64], k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = points
            .chunks(dim)
            .enumerate()
            .map(|(i, p)| (i, p.iter().zip(q).map(|(a, b)| (b - a) * (b - a)).sum::<f64>()))
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    #[test]
    fn single_point() {
        let t = KdTree::build(&[1.0, 2.0], 2);
        assert_eq!(t.leaf_ranges(), vec![(0, 1)]);
        let nn = t.knn(&[0.0, 0.0], 3);
        assert_eq!(nn.len(), 1);
        assert_eq!(nn[0].index, 0);
    }

    #[test]
    fn exact_hit_first_and_duplicates_kept() {
        let mut pts = Vec::new();
        for i in 0..50 {
            pts.extend_from_slice(&[(i % 7) as f64, (i % 5) as f64]);
        }
        let t = KdTree::build(&pts, 2);
        let nn = t.knn(&[3.0, 2.0], 50);
        assert_eq!(nn.len(), 50);
        assert_eq!(nn[0].squared_distance, 0.0);
        // (3, 2) occurs at every i ≡ 3 mod 7 and ≡ 2 mod 5, i.e. i = 17; i = 52 is out of range.
        assert_eq!(nn[0].index, 17);
        let dupes = KdTree::build(&[1.0, 1.0, 1.0, 1.0], 1);
        let nn = dupes.knn(&[1.0], 4);
        assert_eq!(nn.iter().map(|n| n.index).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn every_point_in_one_leaf() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<f64> = (0..3 * 1000).map(|_| rng.random()).collect();
        let t = KdTree::build(&pts, 3);
        let mut seen: Vec<usize> = t.leaf_members().into_iter().flatten().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..1000).collect::<Vec<_>>());
        assert!(t.leaf_ranges().iter().all(|(s, e)| e - s <= LEAF_SIZE));
    }

    #[test]
    fn matches_brute_force_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<f64> = (0..2 * 200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = KdTree::build(&pts, 2);
        for _ in 0..50 {
            let q = [rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2)];
            let got: Vec<usize> = t.knn(&q, 5).iter().map(|n| n.index).collect();
            let want: Vec<usize> = brute_force(&pts, 2, &q, 5).iter().map(|p| p.0).collect();
            assert_eq!(got, want);
        }
    }

    proptest! {
        #[test]
        fn knn_exact_on_lattices(n in 1usize..120, dim in 1usize..4, k in 1usize..30, q in prop::collection::vec(-1i32..6, 3)) {
            // Integer lattice coordinates make distance ties common.
            let pts: Vec<f64> = (0..n * dim).map(|i| ((i * 7 + i / 3) % 5) as f64).collect();
            let t = KdTree::build(&pts, dim);
            let q: Vec<f64> = q[..dim].iter().map(|&v| v as f64).collect();
            let got: Vec<(usize, f64)> = t.knn(&q, k).iter().map(|n| (n.index, n.squared_distance)).collect();
            prop_assert_eq!(got, brute_force(&pts, dim, &q, k.min(n)));
        }
    }
}
