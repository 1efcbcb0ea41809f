//! Static 3-d tree for exact nearest-neighbor queries.
//!
//! The tree is built once with median splits along the axis of widest
//! spread and is immutable afterwards, so a single index can serve queries
//! from many threads. Points are copied into leaf order for locality.
//!
//! Queries are exact and reproducible: among equidistant candidates the one
//! with the smallest original index wins. Pruning uses a per-axis offset
//! bound evaluated with the same float operations as the candidate distance,
//! so a subtree is only skipped when none of its points can tie or beat the
//! current best.

use rayon::prelude::*;

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};

pub const DEFAULT_LEAF_CAPACITY: usize = 16;

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct KdIndex {
    /// Points in leaf order.
    points: Vec<[f64; 3]>,
    /// Original cloud index of each entry in `points`.
    ids: Vec<usize>,
    nodes: Vec<Node>,
    leaf_capacity: usize,
}

/// Result of a nearest-neighbor query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[inline]
pub(crate) fn squared_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl KdIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        Self::build_points(cloud.points(), DEFAULT_LEAF_CAPACITY)
    }

    pub fn build_with_capacity(cloud: &PointCloud, leaf_capacity: usize) -> Result<Self> {
        Self::build_points(cloud.points(), leaf_capacity)
    }

    pub fn build_points(points: &[Point3], leaf_capacity: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("cloud"));
        }
        if leaf_capacity == 0 {
            return Err(Error::InvalidParameter("leaf capacity must be positive".into()));
        }
        let coords: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut ids: Vec<usize> = (0..coords.len()).collect();
        let mut nodes = Vec::with_capacity(2 * coords.len() / leaf_capacity + 1);
        build_node(&coords, &mut ids, 0, leaf_capacity, &mut nodes);
        let points = ids.iter().map(|&i| coords[i]).collect();
        Ok(KdIndex {
            points,
            ids,
            nodes,
            leaf_capacity,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn leaf_capacity(&self) -> usize {
        self.leaf_capacity
    }

    /// Nearest indexed point to `query` and its Euclidean distance.
    pub fn nearest(&self, query: &Point3) -> Neighbor {
        let (index, d2) = self.nearest_squared(query);
        Neighbor {
            index,
            distance: d2.sqrt(),
        }
    }

    /// Like [`KdIndex::nearest`] but returns the squared distance.
    pub fn nearest_squared(&self, query: &Point3) -> (usize, f64) {
        let q = [query.x, query.y, query.z];
        let mut best = (f64::INFINITY, usize::MAX);
        let mut offsets = [0.0; 3];
        self.search(0, &q, &mut offsets, &mut best);
        (best.1, best.0)
    }

    /// Answers many queries in parallel; output order follows `queries`.
    pub fn nearest_many(&self, queries: &[Point3]) -> Vec<Neighbor> {
        queries.par_iter().map(|q| self.nearest(q)).collect()
    }

    fn search(&self, node: usize, q: &[f64; 3], offsets: &mut [f64; 3], best: &mut (f64, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for (p, &id) in self.points[start..end].iter().zip(&self.ids[start..end]) {
                    let d2 = squared_distance(q, p);
                    if d2 < best.0 || (d2 == best.0 && id < best.1) {
                        *best = (d2, id);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                // Left holds coordinates <= value, right holds >= value.
                let (near, far, gap) = if q[axis] <= value {
                    (left, right, value - q[axis])
                } else {
                    (right, left, q[axis] - value)
                };
                self.search(near, q, offsets, best);

                let saved = offsets[axis];
                offsets[axis] = gap;
                let bound = offsets[0] * offsets[0] + offsets[1] * offsets[1] + offsets[2] * offsets[2];
                if bound <= best.0 {
                    self.search(far, q, offsets, best);
                }
                offsets[axis] = saved;
            }
        }
    }

    /// Number of node levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], n: usize) -> usize {
            match nodes[n] {
                Node::Leaf { .. } => 1,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Original point indices held by each leaf, in tree order.
    pub fn leaves(&self) -> Vec<&[usize]> {
        self.nodes
            .iter()
            .filter_map(|n| match *n {
                Node::Leaf { start, end } => Some(&self.ids[start..end]),
                Node::Split { .. } => None,
            })
            .collect()
    }
}

fn build_node(coords: &[[f64; 3]], ids: &mut [usize], offset: usize, cap: usize, nodes: &mut Vec<Node>) -> usize {
    let me = nodes.len();
    let leaf = Node::Leaf {
        start: offset,
        end: offset + ids.len(),
    };
    nodes.push(leaf);
    if ids.len() <= cap {
        return me;
    }

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in ids.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(coords[i][a]);
            hi[a] = hi[a].max(coords[i][a]);
        }
    }
    let mut axis = 0;
    for a in 1..3 {
        if hi[a] - lo[a] > hi[axis] - lo[axis] {
            axis = a;
        }
    }
    if hi[axis] - lo[axis] <= 0.0 {
        // All points coincide; no split can separate them.
        return me;
    }

    let mid = ids.len() / 2;
    ids.select_nth_unstable_by(mid, |&a, &b| {
        coords[a][axis].total_cmp(&coords[b][axis]).then(a.cmp(&b))
    });
    let value = coords[ids[mid]][axis];
    let (l, r) = ids.split_at_mut(mid);
    let left = build_node(coords, l, offset, cap, nodes);
    let right = build_node(coords, r, offset + mid, cap, nodes);
    nodes[me] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    me
}
