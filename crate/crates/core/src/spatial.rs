//! Exact nearest-neighbor and radius queries over a static kd-tree.
//!
//! Neighborhoods always contain the query point itself. Results are ordered
//! by ascending squared distance with ties broken by ascending point index,
//! which makes every query reproducible against a brute-force scan.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 12;

#[inline]
pub fn squared_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    positions: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// Heap entry ordered by (distance, index).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl SpatialIndex {
    pub fn new(positions: Vec<[f64; 3]>) -> Self {
        let mut index = Self {
            order: (0..positions.len()).collect(),
            positions,
            nodes: Vec::new(),
        };
        if !index.positions.is_empty() {
            index.build(0, index.positions.len());
        }
        index
    }

    pub fn from_cloud(cloud: &PointCloud) -> Self {
        Self::new(cloud.positions().to_vec())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            let p = self.positions[i];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
            .unwrap();
        if hi[axis] - lo[axis] == 0.0 {
            // all points coincide
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let positions = &self.positions;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            positions[a][axis]
                .total_cmp(&positions[b][axis])
                .then(a.cmp(&b))
        });
        let value = self.positions[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    fn check(&self, query_index: usize) -> Result<()> {
        if query_index >= self.len() {
            Err(Error::IndexOutOfRange {
                index: query_index,
                len: self.len(),
            })
        } else {
            Ok(())
        }
    }

    /// The `min(k, n)` nearest points to point `query_index`, itself included.
    pub fn knn(&self, query_index: usize, k: usize) -> Result<Vec<usize>> {
        self.check(query_index)?;
        Ok(self.knn_point(&self.positions[query_index], k))
    }

    /// Indices with their squared distances, nearest first.
    pub fn knn_with_distances(&self, query: &[f64; 3], k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_node(0, query, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (c.index, c.d2)).collect()
    }

    pub fn knn_point(&self, query: &[f64; 3], k: usize) -> Vec<usize> {
        self.knn_with_distances(query, k)
            .into_iter()
            .map(|(i, _)| i)
            .collect()
    }

    fn knn_node(&self, node: usize, q: &[f64; 3], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let c = Candidate {
                        d2: squared_distance(q, &self.positions[i]),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_node(near, q, k, heap);
                let worst = if heap.len() < k {
                    f64::INFINITY
                } else {
                    heap.peek().unwrap().d2
                };
                if diff * diff <= worst {
                    self.knn_node(far, q, k, heap);
                }
            }
        }
    }

    /// All points within `radius` of point `query_index`, ascending index.
    pub fn radius_query(&self, query_index: usize, radius: f64) -> Result<Vec<usize>> {
        self.check(query_index)?;
        self.radius_point(&self.positions[query_index], radius)
    }

    pub fn radius_point(&self, query: &[f64; 3], radius: f64) -> Result<Vec<usize>> {
        if radius.is_nan() || radius < 0.0 {
            return Err(Error::InvalidArgument(format!("radius must be non-negative, got {radius}")));
        }
        let mut out = Vec::new();
        if !self.is_empty() {
            self.radius_node(0, query, radius * radius, &mut |i, _| out.push(i));
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Visits every point within `radius` of `query` (unordered) with its
    /// squared distance.
    pub fn for_each_within(&self, query: &[f64; 3], radius: f64, mut f: impl FnMut(usize, f64)) {
        if !self.is_empty() && radius >= 0.0 {
            self.radius_node(0, query, radius * radius, &mut f);
        }
    }

    fn radius_node(&self, node: usize, q: &[f64; 3], r2: f64, f: &mut impl FnMut(usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = squared_distance(q, &self.positions[i]);
                    if d2 <= r2 {
                        f(i, d2);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.radius_node(near, q, r2, f);
                if diff * diff <= r2 {
                    self.radius_node(far, q, r2, f);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_knn(pts: &[[f64; 3]], q: usize, k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let d = [pts[q][0] - p[0], pts[q][1] - p[1], pts[q][2] - p[2]];
                (d[0] * d[0] + d[1] * d[1] + d[2] * d[2], i)
            })
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    #[test]
    fn single_point() {
        let idx = SpatialIndex::new(vec![[1.0, 2.0, 3.0]]);
        assert_eq!(idx.knn(0, 1).unwrap(), vec![0]);
        assert_eq!(idx.knn(0, 5).unwrap(), vec![0]);
        assert_eq!(idx.radius_query(0, 0.0).unwrap(), vec![0]);
    }

    #[test]
    fn duplicates_are_retrievable() {
        let idx = SpatialIndex::new(vec![[0.0; 3], [0.0; 3], [5.0, 0.0, 0.0]]);
        assert_eq!(idx.knn(1, 2).unwrap(), vec![0, 1]);
        assert_eq!(idx.radius_query(0, 0.0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn collinear_examples() {
        let idx = SpatialIndex::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        assert_eq!(idx.knn(0, 1).unwrap(), vec![0]);
        assert_eq!(idx.knn(0, 2).unwrap(), vec![0, 1]);
        // equidistant neighbors of the middle point resolve by index
        assert_eq!(idx.knn(1, 2).unwrap(), vec![1, 0]);
        assert_eq!(idx.radius_query(0, 0.0).unwrap(), vec![0]);
        assert_eq!(idx.radius_query(2, 10.0).unwrap(), vec![0, 1, 2]);
        assert!(idx.radius_query(0, -1.0).is_err());
        assert!(idx.knn(3, 1).is_err());
    }

    #[test]
    fn grid_ties_match_naive() {
        // integer lattice produces many exact distance ties
        let mut pts = Vec::new();
        for x in 0..6 {
            for y in 0..6 {
                for z in 0..3 {
                    pts.push([x as f64, y as f64, z as f64]);
                }
            }
        }
        let idx = SpatialIndex::new(pts.clone());
        for q in 0..pts.len() {
            for k in [1, 2, 7, 19, 40, 200] {
                assert_eq!(idx.knn(q, k).unwrap(), naive_knn(&pts, q, k));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn radius_is_monotone(
            pts in prop::collection::vec(prop::array::uniform3(-10.0f64..10.0), 1..120),
            r in 0.0f64..5.0,
            extra in 0.0f64..5.0,
        ) {
            let idx = SpatialIndex::new(pts.clone());
            for q in 0..pts.len().min(10) {
                let small = idx.radius_query(q, r).unwrap();
                let big = idx.radius_query(q, r + extra).unwrap();
                prop_assert!(small.iter().all(|i| big.contains(i)));
                prop_assert!(small.contains(&q));
            }
        }
    }
}
