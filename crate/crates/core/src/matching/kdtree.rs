use crate::geometry::SegmentId;

use super::squared_distance;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

/// Exact kd-tree over row-major descriptors. Returns the same neighbours,
/// in the same order, as a full scan ordered by (squared distance, id).
#[derive(Debug, Clone)]
pub struct KdTree {
    order: Vec<usize>,
    root: Node,
}

impl KdTree {
    pub fn build(data: &[f64], dim: usize) -> Self {
        let n = data.len().checked_div(dim).unwrap_or(0);
        let mut order: Vec<usize> = (0..n).collect();
        let root = Self::build_node(data, dim, &mut order, 0);
        Self { order, root }
    }

    fn build_node(data: &[f64], dim: usize, idx: &mut [usize], offset: usize) -> Node {
        if idx.len() <= LEAF_SIZE {
            return Node::Leaf { start: offset, end: offset + idx.len() };
        }
        let spread = |d: usize| {
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = data[i * dim + d];
                (lo.min(v), hi.max(v))
            });
            hi - lo
        };
        let split_dim = (0..dim).max_by(|&a, &b| spread(a).total_cmp(&spread(b))).unwrap_or(0);
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| data[a * dim + split_dim].total_cmp(&data[b * dim + split_dim]));
        let value = data[idx[mid] * dim + split_dim];
        let (left, right) = idx.split_at_mut(mid);
        Node::Split {
            dim: split_dim,
            value,
            left: Box::new(Self::build_node(data, dim, left, offset)),
            right: Box::new(Self::build_node(data, dim, right, offset + mid)),
        }
    }

    /// `k` nearest rows as `(squared distance, row)`, ordered by distance then id.
    pub fn nearest(&self, data: &[f64], dim: usize, q: &[f64], k: usize, ids: &[SegmentId]) -> Vec<(f64, usize)> {
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k > 0 {
            self.search(&self.root, data, dim, q, k, ids, &mut best);
        }
        best
    }

    #[allow(clippy::too_many_arguments)]
    fn search(&self, node: &Node, data: &[f64], dim: usize, q: &[f64], k: usize, ids: &[SegmentId], best: &mut Vec<(f64, usize)>) {
        match node {
            Node::Leaf { start, end } => {
                for &row in &self.order[*start..*end] {
                    let d = squared_distance(&data[row * dim..(row + 1) * dim], q);
                    let key = |e: &(f64, usize)| (e.0, ids[e.1]);
                    let pos = best.partition_point(|e| {
                        let (bd, bid) = key(e);
                        bd < d || (bd == d && bid < ids[row])
                    });
                    if pos < k {
                        best.insert(pos, (d, row));
                        best.truncate(k);
                    }
                }
            }
            Node::Split { dim: sd, value, left, right } => {
                let diff = q[*sd] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, data, dim, q, k, ids, best);
                // A far-side point is at least |diff| away; keep equal-distance
                // candidates reachable so id tie-breaks stay exact.
                if best.len() < k || diff * diff <= best[best.len() - 1].0 {
                    self.search(far, data, dim, q, k, ids, best);
                }
            }
        }
    }
}
