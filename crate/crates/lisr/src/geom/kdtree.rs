//! Exact nearest-neighbor search over a fixed point set.
//!
//! Bounding boxes are stored per node and pruning only discards subtrees
//! whose minimum possible distance is strictly greater than the current
//! best, so equal-distance candidates are always visited and ties resolve
//! to the smallest point index. Queries are exact for both the Euclidean
//! and the L1 metric.

use super::{Aabb, Point3};

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
struct Node {
    aabb: Aabb,
    /// `usize::MAX` marks a leaf.
    left: usize,
    right: usize,
    start: usize,
    end: usize,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3>,
    indices: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: &[Point3]) -> KdTree {
        let mut tree = KdTree {
            points: points.to_vec(),
            indices: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.split(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn split(&mut self, start: usize, end: usize) -> usize {
        let aabb = Aabb::from_points(
            &self.indices[start..end]
                .iter()
                .map(|&i| self.points[i])
                .collect::<Vec<_>>(),
        )
        .expect("non-empty range");

        let id = self.nodes.len();
        self.nodes.push(Node {
            aabb,
            left: usize::MAX,
            right: usize::MAX,
            start,
            end,
        });

        if end - start > LEAF_SIZE {
            let ext = aabb.max - aabb.min;
            let axis = if ext.x >= ext.y && ext.x >= ext.z {
                0
            } else if ext.y >= ext.z {
                1
            } else {
                2
            };
            let mid = (start + end) / 2;
            let points = &self.points;
            self.indices[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                points[a]
                    .coord(axis)
                    .partial_cmp(&points[b].coord(axis))
                    .unwrap()
                    .then(a.cmp(&b))
            });
            // Degenerate spreads collapse to a leaf.
            if mid > start && mid < end {
                let left = self.split(start, mid);
                let right = self.split(mid, end);
                self.nodes[id].left = left;
                self.nodes[id].right = right;
            }
        }
        id
    }

    /// Nearest point by Euclidean distance as `(index, distance)`, ties to
    /// the smallest index. Panics on an empty tree.
    pub fn nearest(&self, query: Point3) -> (usize, f64) {
        self.nearest_impl(query, usize::MAX, Metric::L2)
            .expect("nearest() on empty KdTree")
    }

    /// Nearest point excluding index `skip`; `None` when no other point
    /// exists.
    pub fn nearest_excluding(&self, query: Point3, skip: usize) -> Option<(usize, f64)> {
        self.nearest_impl(query, skip, Metric::L2)
    }

    /// Nearest point by L1 distance as `(index, distance)`.
    pub fn nearest_l1(&self, query: Point3) -> (usize, f64) {
        self.nearest_impl(query, usize::MAX, Metric::L1)
            .expect("nearest_l1() on empty KdTree")
    }

    fn nearest_impl(&self, query: Point3, skip: usize, metric: Metric) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        self.visit(0, query, skip, metric, &mut best);
        // L2 search runs on squared distances
        best.map(|(i, d)| match metric {
            Metric::L2 => (i, d.sqrt()),
            Metric::L1 => (i, d),
        })
    }

    fn visit(
        &self,
        node: usize,
        query: Point3,
        skip: usize,
        metric: Metric,
        best: &mut Option<(usize, f64)>,
    ) {
        let n = &self.nodes[node];
        if let Some((_, bd)) = *best {
            if metric.box_distance(&n.aabb, query) > bd {
                return;
            }
        }
        if n.left == usize::MAX {
            for &i in &self.indices[n.start..n.end] {
                if i == skip {
                    continue;
                }
                let d = metric.point_distance(self.points[i], query);
                let better = match *best {
                    None => true,
                    Some((bi, bd)) => d < bd || (d == bd && i < bi),
                };
                if better {
                    *best = Some((i, d));
                }
            }
            return;
        }
        // Descend into the closer child first.
        let (a, b) = (n.left, n.right);
        let da = metric.box_distance(&self.nodes[a].aabb, query);
        let db = metric.box_distance(&self.nodes[b].aabb, query);
        if da <= db {
            self.visit(a, query, skip, metric, best);
            self.visit(b, query, skip, metric, best);
        } else {
            self.visit(b, query, skip, metric, best);
            self.visit(a, query, skip, metric, best);
        }
    }
}

#[derive(Clone, Copy)]
enum Metric {
    /// Compared in squared distance.
    L2,
    L1,
}

impl Metric {
    fn point_distance(self, a: Point3, b: Point3) -> f64 {
        match self {
            Metric::L2 => (a - b).norm_squared(),
            Metric::L1 => (a - b).norm_l1(),
        }
    }

    fn box_distance(self, aabb: &Aabb, p: Point3) -> f64 {
        match self {
            Metric::L2 => aabb.distance_squared(p),
            Metric::L1 => aabb.distance_l1(p),
        }
    }
}
