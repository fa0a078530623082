//! Exact k-nearest-neighbour search.
//!
//! Returns the same multiset of squared distances as a linear scan, computed
//! with the same floating-point expression, so downstream sums are bit-identical.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::PointCloud;

#[derive(Clone, Copy, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

const LEAF_SIZE: usize = 16;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

pub struct KdTree<'a> {
    cloud: &'a PointCloud,
    order: Vec<usize>,
    root: Node,
}

#[inline]
pub(crate) fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

impl<'a> KdTree<'a> {
    pub fn build(cloud: &'a PointCloud) -> Self {
        let mut order: Vec<usize> = (0..cloud.len()).collect();
        let root = Self::build_node(cloud, &mut order, 0, cloud.len());
        KdTree { cloud, order, root }
    }

    fn build_node(cloud: &PointCloud, order: &mut [usize], start: usize, end: usize) -> Node {
        if end - start <= LEAF_SIZE {
            return Node::Leaf { start, end };
        }
        let d = cloud.dim();
        // split on the axis of largest spread
        let mut best = (0, f64::NEG_INFINITY);
        for axis in 0..d {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &order[start..end] {
                let c = cloud.point(i)[axis];
                lo = lo.min(c);
                hi = hi.max(c);
            }
            if hi - lo > best.1 {
                best = (axis, hi - lo);
            }
        }
        let axis = best.0;
        if best.1 == 0.0 {
            return Node::Leaf { start, end };
        }
        let mid = start + (end - start) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |a, b| {
            cloud.point(*a)[axis].total_cmp(&cloud.point(*b)[axis])
        });
        let value = cloud.point(order[mid])[axis];
        let left = Self::build_node(cloud, order, start, mid);
        let right = Self::build_node(cloud, order, mid, end);
        Node::Split {
            axis,
            value,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// The `k` smallest squared distances from `x`, ascending.
    pub fn k_smallest_squared(&self, x: &[f64], k: usize) -> Vec<f64> {
        let k = k.min(self.cloud.len());
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            self.search(&self.root, x, k, &mut heap);
        }
        let mut out: Vec<f64> = heap.into_iter().map(|d| d.0).collect();
        out.sort_by(f64::total_cmp);
        out
    }

    fn search(&self, node: &Node, x: &[f64], k: usize, heap: &mut BinaryHeap<Dist>) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let d = squared_distance(x, self.cloud.point(i));
                    if heap.len() < k {
                        heap.push(Dist(d));
                    } else if d < heap.peek().unwrap().0 {
                        heap.pop();
                        heap.push(Dist(d));
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = x[*axis] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, x, k, heap);
                let bound = diff * diff;
                if heap.len() < k || bound <= heap.peek().unwrap().0 {
                    self.search(far, x, k, heap);
                }
            }
        }
    }
}

/// Linear-scan reference for [`KdTree::k_smallest_squared`].
pub fn brute_k_smallest_squared(cloud: &PointCloud, x: &[f64], k: usize) -> Vec<f64> {
    let mut d: Vec<f64> = cloud.points().map(|p| squared_distance(x, p)).collect();
    let k = k.min(d.len());
    if k == 0 {
        return Vec::new();
    }
    d.select_nth_unstable_by(k - 1, f64::total_cmp);
    d.truncate(k);
    d.sort_by(f64::total_cmp);
    d
}
