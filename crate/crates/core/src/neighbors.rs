//! Exact k-nearest-neighbour search.
//!
//! [`NeighborIndex`] is a KD-tree built over the leading principal
//! projections of the points. Projection onto orthonormal axes never
//! increases Euclidean distance, so a node whose projected bounding box is
//! farther than the current k-th best candidate cannot contain a closer
//! point; pruning on that bound keeps the search exact. Candidate order is
//! `(squared distance, original index)`, identical to [`k_nearest_linear`].

use crate::par::{self, Exec};
use crate::pca::principal_axes;

const LEAF_SIZE: usize = 24;
const MAX_PROJECTED_DIMS: usize = 3;
const AXIS_SAMPLE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Index of the point in the input order.
    pub index: usize,
    pub dist2: f64,
}

/// Squared Euclidean distance, accumulated in index order.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Sorted-by-`(dist2, index)` list of at most `k` candidates.
struct Best {
    k: usize,
    items: Vec<Neighbor>,
}

impl Best {
    fn new(k: usize) -> Self {
        Self { k, items: Vec::with_capacity(k + 1) }
    }

    fn worst(&self) -> f64 {
        if self.items.len() < self.k {
            f64::INFINITY
        } else {
            self.items[self.k - 1].dist2
        }
    }

    fn offer(&mut self, index: usize, dist2: f64) {
        let precedes = |n: &Neighbor| n.dist2 < dist2 || (n.dist2 == dist2 && n.index < index);
        if self.items.len() == self.k && precedes(&self.items[self.k - 1]) {
            return;
        }
        let pos = self.items.partition_point(precedes);
        self.items.insert(pos, Neighbor { index, dist2 });
        self.items.truncate(self.k);
    }
}

/// Exhaustive scan; the reference the index is tested against.
pub fn k_nearest_linear(points: &[f64], dim: usize, query: &[f64], k: usize) -> Vec<Neighbor> {
    let mut best = Best::new(k);
    for (i, p) in points.chunks_exact(dim).enumerate() {
        best.offer(i, squared_distance(query, p));
    }
    best.items
}

#[derive(Debug, Clone)]
struct Node {
    start: usize,
    end: usize,
    lo: [f64; MAX_PROJECTED_DIMS],
    hi: [f64; MAX_PROJECTED_DIMS],
    children: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct NeighborIndex {
    dim: usize,
    n: usize,
    /// Points in tree order.
    points: Vec<f64>,
    ids: Vec<usize>,
    /// Projected coordinates in tree order, `n x pdim`.
    proj: Vec<f64>,
    pdim: usize,
    origin: Vec<f64>,
    axes: Vec<Vec<f64>>,
    identity: bool,
    nodes: Vec<Node>,
    slack: f64,
}

impl NeighborIndex {
    /// Indexes `n = points.len() / dim` points given row-major.
    pub fn new(points: &[f64], dim: usize) -> Self {
        assert!(dim > 0 && points.len() % dim == 0 && !points.is_empty());
        let n = points.len() / dim;
        let identity = dim <= MAX_PROJECTED_DIMS;
        let pdim = dim.min(MAX_PROJECTED_DIMS);
        let (origin, axes) = if identity {
            (vec![0.0; dim], Vec::new())
        } else {
            let stride = n.div_ceil(AXIS_SAMPLE);
            let sample: Vec<f64> = points.chunks_exact(dim).step_by(stride).flatten().copied().collect();
            let m = sample.len() / dim;
            let pa = principal_axes(&sample, m, dim);
            (pa.mean, pa.components.into_iter().take(pdim).collect())
        };
        let mut index = NeighborIndex {
            dim,
            n,
            points: Vec::new(),
            ids: (0..n).collect(),
            proj: Vec::new(),
            pdim,
            origin,
            axes,
            identity,
            nodes: Vec::new(),
            slack: 0.0,
        };
        let mut proj = vec![0f64; n * pdim];
        for (i, p) in points.chunks_exact(dim).enumerate() {
            index.project(p, &mut proj[i * pdim..(i + 1) * pdim]);
        }
        let scale = proj.iter().fold(0f64, |a, x| a.max(x.abs()));
        index.slack = 1e-10 * scale * scale;

        let mut order: Vec<usize> = (0..n).collect();
        index.build(&mut order, &proj, 0, n);
        index.points = order.iter().flat_map(|&i| points[i * dim..(i + 1) * dim].iter().copied()).collect();
        index.proj = order.iter().flat_map(|&i| proj[i * pdim..(i + 1) * pdim].iter().copied()).collect();
        index.ids = order;
        index
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn project(&self, p: &[f64], out: &mut [f64]) {
        if self.identity {
            out.copy_from_slice(p);
        } else {
            for (o, a) in out.iter_mut().zip(&self.axes) {
                *o = p.iter().zip(&self.origin).zip(a).map(|((x, m), a)| (x - m) * a).sum();
            }
        }
    }

    fn build(&mut self, order: &mut [usize], proj: &[f64], start: usize, end: usize) -> usize {
        let pd = self.pdim;
        let mut lo = [f64::INFINITY; MAX_PROJECTED_DIMS];
        let mut hi = [f64::NEG_INFINITY; MAX_PROJECTED_DIMS];
        for &i in &order[start..end] {
            for a in 0..pd {
                lo[a] = lo[a].min(proj[i * pd + a]);
                hi[a] = hi[a].max(proj[i * pd + a]);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node { start, end, lo, hi, children: None });
        if end - start > LEAF_SIZE {
            let axis = (0..pd).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
            if hi[axis] > lo[axis] {
                let mid = (start + end) / 2;
                order[start..end].select_nth_unstable_by(mid - start, |&x, &y| {
                    proj[x * pd + axis].total_cmp(&proj[y * pd + axis]).then(x.cmp(&y))
                });
                let left = self.build(order, proj, start, mid);
                let right = self.build(order, proj, mid, end);
                self.nodes[id].children = Some((left, right));
            }
        }
        id
    }

    fn box_dist2(&self, node: &Node, q: &[f64]) -> f64 {
        let mut s = 0.0;
        for a in 0..self.pdim {
            let d = if q[a] < node.lo[a] {
                node.lo[a] - q[a]
            } else if q[a] > node.hi[a] {
                q[a] - node.hi[a]
            } else {
                0.0
            };
            s += d * d;
        }
        s
    }

    fn prunable(&self, bound: f64, worst: f64) -> bool {
        bound * (1.0 - 1e-9) > worst + self.slack
    }

    /// The `k` nearest indexed points to `query`, nearest first.
    pub fn k_nearest(&self, query: &[f64], k: usize) -> Vec<Neighbor> {
        assert_eq!(query.len(), self.dim);
        let k = k.min(self.n);
        if k == 0 {
            return Vec::new();
        }
        let mut qp = [0f64; MAX_PROJECTED_DIMS];
        self.project(query, &mut qp[..self.pdim]);
        let qp = &qp[..self.pdim];
        let mut best = Best::new(k);
        let mut stack = vec![(0usize, 0f64)];
        while let Some((id, bound)) = stack.pop() {
            if self.prunable(bound, best.worst()) {
                continue;
            }
            let node = &self.nodes[id];
            match node.children {
                Some((l, r)) => {
                    let dl = self.box_dist2(&self.nodes[l], qp);
                    let dr = self.box_dist2(&self.nodes[r], qp);
                    // nearer child on top of the stack
                    if dl <= dr {
                        stack.push((r, dr));
                        stack.push((l, dl));
                    } else {
                        stack.push((l, dl));
                        stack.push((r, dr));
                    }
                }
                None => {
                    for pos in node.start..node.end {
                        let worst = best.worst();
                        if !self.identity {
                            let pp = &self.proj[pos * self.pdim..(pos + 1) * self.pdim];
                            if self.prunable(squared_distance(qp, pp), worst) {
                                continue;
                            }
                        }
                        let p = &self.points[pos * self.dim..(pos + 1) * self.dim];
                        if let Some(d2) = bounded_distance(query, p, worst) {
                            best.offer(self.ids[pos], d2);
                        }
                    }
                }
            }
        }
        best.items
    }

    /// Nearest neighbours of many row-major queries.
    pub fn k_nearest_batch(&self, queries: &[f64], k: usize, exec: Exec) -> Vec<Vec<Neighbor>> {
        assert_eq!(queries.len() % self.dim, 0);
        let nq = queries.len() / self.dim;
        par::map_indexed(exec, nq, |i| self.k_nearest(&queries[i * self.dim..(i + 1) * self.dim], k))
    }
}

/// Squared distance, or `None` once the running sum exceeds `limit`.
/// Partial sums only grow, so an abandoned candidate is strictly worse.
#[inline]
fn bounded_distance(a: &[f64], b: &[f64], limit: f64) -> Option<f64> {
    let mut s = 0.0;
    for (ca, cb) in a.chunks(8).zip(b.chunks(8)) {
        for (x, y) in ca.iter().zip(cb) {
            let d = x - y;
            s += d * d;
        }
        if s > limit {
            return None;
        }
    }
    Some(s)
}
