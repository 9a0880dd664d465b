//! Axis-aligned bounding volume hierarchy over mesh triangles.
//!
//! Built once by recursive median split on the longest centroid axis. The
//! build is fully deterministic: ties in the centroid sort fall back to the
//! triangle index.

use super::Vec3;

const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&mut self, other: &Aabb) {
        self.min = self.min.inf(&other.min);
        self.max = self.max.sup(&other.max);
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    /// Squared distance from `p` to the box (0 inside).
    pub fn distance_squared(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let e = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d += e * e;
        }
        d
    }
}

#[derive(Clone, Debug)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Inner { left: usize, right: usize },
}

#[derive(Clone, Debug)]
struct Node {
    bounds: Aabb,
    kind: NodeKind,
}

#[derive(Clone, Debug)]
pub(crate) struct Bvh {
    nodes: Vec<Node>,
    /// Triangle indices, permuted so each leaf owns a contiguous range.
    order: Vec<usize>,
}

impl Bvh {
    pub fn build(bounds: &[Aabb]) -> Self {
        let centroids: Vec<Vec3> = bounds.iter().map(|b| (b.min + b.max) * 0.5).collect();
        let mut order: Vec<usize> = (0..bounds.len()).collect();
        let mut nodes = Vec::new();
        if !bounds.is_empty() {
            build_node(&mut nodes, &mut order, 0, bounds.len(), bounds, &centroids);
        }
        Bvh { nodes, order }
    }

    pub fn root_bounds(&self) -> Option<Aabb> {
        self.nodes.first().map(|n| n.bounds)
    }

    /// Branch-and-bound nearest search. `eval(tri)` returns the squared
    /// distance from the query to triangle `tri`; the best triangle and its
    /// distance are returned.
    pub fn nearest<F: FnMut(usize) -> f64>(&self, p: &Vec3, mut eval: F) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        let mut best_d = f64::INFINITY;
        let mut stack: Vec<(usize, f64)> = vec![(0, self.nodes[0].bounds.distance_squared(p))];
        while let Some((idx, lower)) = stack.pop() {
            if lower > best_d {
                continue;
            }
            match self.nodes[idx].kind {
                NodeKind::Leaf { start, end } => {
                    for &tri in &self.order[start..end] {
                        let d = eval(tri);
                        // strict comparison plus index tie-break keeps the
                        // answer independent of traversal order
                        let better = match best {
                            None => true,
                            Some((bt, bd)) => d < bd || (d == bd && tri < bt),
                        };
                        if better {
                            best = Some((tri, d));
                            best_d = d;
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = self.nodes[left].bounds.distance_squared(p);
                    let dr = self.nodes[right].bounds.distance_squared(p);
                    // push the farther child first so the nearer is visited first
                    if dl <= dr {
                        stack.push((right, dr));
                        stack.push((left, dl));
                    } else {
                        stack.push((left, dl));
                        stack.push((right, dr));
                    }
                }
            }
        }
        best
    }
}

fn build_node(
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    start: usize,
    end: usize,
    bounds: &[Aabb],
    centroids: &[Vec3],
) -> usize {
    let mut b = Aabb::empty();
    let mut cb = Aabb::empty();
    for &t in &order[start..end] {
        b.merge(&bounds[t]);
        cb.grow(&centroids[t]);
    }
    let idx = nodes.len();
    nodes.push(Node {
        bounds: b,
        kind: NodeKind::Leaf { start, end },
    });
    if end - start <= LEAF_SIZE {
        return idx;
    }
    let extent = cb.max - cb.min;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    order[start..end].sort_by(|&a, &b| {
        centroids[a][axis]
            .total_cmp(&centroids[b][axis])
            .then(a.cmp(&b))
    });
    let mid = (start + end) / 2;
    let left = build_node(nodes, order, start, mid, bounds, centroids);
    let right = build_node(nodes, order, mid, end, bounds, centroids);
    nodes[idx].kind = NodeKind::Inner { left, right };
    idx
}
