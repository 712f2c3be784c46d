//! Exact k-nearest-neighbour search over a subset of embedded points.
//!
//! Small libraries use a brute-force scan; large ones a kd-tree. Both return
//! identical results: neighbours are ordered by `(squared distance, point
//! index)`, so ties resolve the same way regardless of the search structure.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Library size from which the kd-tree replaces the brute-force scan.
pub const KD_TREE_THRESHOLD: usize = 50_000;

const LEAF_SIZE: usize = 16;

/// A neighbour: squared Euclidean distance and embedded-point index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub dist2: f64,
    pub point: usize,
}

impl Neighbor {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.point.cmp(&other.point))
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Keeps the `k` smallest neighbours seen so far.
struct Best {
    k: usize,
    heap: BinaryHeap<Neighbor>,
}

impl Best {
    fn new(k: usize) -> Self {
        Best { k, heap: BinaryHeap::with_capacity(k + 1) }
    }

    fn offer(&mut self, n: Neighbor) {
        if self.heap.len() < self.k {
            self.heap.push(n);
        } else if let Some(worst) = self.heap.peek() {
            if n < *worst {
                self.heap.pop();
                self.heap.push(n);
            }
        }
    }

    fn full(&self) -> bool {
        self.heap.len() >= self.k
    }

    fn worst_dist2(&self) -> f64 {
        self.heap.peek().map_or(f64::INFINITY, |n| n.dist2)
    }

    fn into_sorted(self) -> Vec<Neighbor> {
        self.heap.into_sorted_vec()
    }
}

enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

/// Nearest-neighbour index over library points of a flat row-major point
/// array with `dim` columns.
pub struct NeighborIndex<'a> {
    coords: &'a [f64],
    dim: usize,
    library: Vec<usize>,
    root: Option<Node>,
}

impl<'a> NeighborIndex<'a> {
    pub fn new(coords: &'a [f64], dim: usize, library: &[usize]) -> Self {
        Self::with_threshold(coords, dim, library, KD_TREE_THRESHOLD)
    }

    /// As [`NeighborIndex::new`] with an explicit kd-tree threshold.
    pub fn with_threshold(coords: &'a [f64], dim: usize, library: &[usize], threshold: usize) -> Self {
        let mut library = library.to_vec();
        let root = if library.len() >= threshold {
            let len = library.len();
            Some(build(coords, dim, &mut library, 0, len))
        } else {
            None
        };
        NeighborIndex { coords, dim, library, root }
    }

    pub fn uses_tree(&self) -> bool {
        self.root.is_some()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// The `k` nearest library points to `query`, skipping points for which
    /// `exclude` returns true, ordered by `(distance, index)`.
    pub fn knn(&self, query: &[f64], k: usize, exclude: impl Fn(usize) -> bool) -> Vec<Neighbor> {
        let mut best = Best::new(k);
        if k == 0 {
            return Vec::new();
        }
        match &self.root {
            None => {
                for &p in &self.library {
                    if !exclude(p) {
                        best.offer(Neighbor { dist2: dist2(query, self.point(p)), point: p });
                    }
                }
            }
            Some(root) => self.search(root, query, &exclude, &mut best),
        }
        best.into_sorted()
    }

    fn search(&self, node: &Node, query: &[f64], exclude: &impl Fn(usize) -> bool, best: &mut Best) {
        match node {
            Node::Leaf { start, end } => {
                for &p in &self.library[*start..*end] {
                    if !exclude(p) {
                        best.offer(Neighbor { dist2: dist2(query, self.point(p)), point: p });
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = query[*dim] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, exclude, best);
                // Equal-distance candidates must still be visited so that
                // index tie-breaking matches the brute-force scan.
                if !best.full() || diff * diff <= best.worst_dist2() {
                    self.search(far, query, exclude, best);
                }
            }
        }
    }
}

fn build(coords: &[f64], dim: usize, idx: &mut [usize], start: usize, end: usize) -> Node {
    let slice = &mut idx[start..end];
    if slice.len() <= LEAF_SIZE {
        return Node::Leaf { start, end };
    }
    let coord = |p: usize, d: usize| coords[p * dim + d];
    let split_dim = (0..dim)
        .map(|d| {
            let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                (lo.min(coord(p, d)), hi.max(coord(p, d)))
            });
            (d, hi - lo)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(d, _)| d)
        .unwrap_or(0);
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        coord(a, split_dim).total_cmp(&coord(b, split_dim)).then(a.cmp(&b))
    });
    let value = coord(slice[mid], split_dim);
    // Left holds points <= value on the split axis, right holds >= value.
    let left = Box::new(build(coords, dim, idx, start, start + mid));
    let right = Box::new(build(coords, dim, idx, start + mid, end));
    Node::Split { dim: split_dim, value, left, right }
}
