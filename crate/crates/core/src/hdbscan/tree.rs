//! Hierarchy construction: mutual-reachability MST, single linkage,
//! condensed tree, stability and cluster selection.

use serde::{Deserialize, Serialize};

use crate::neighbors::squared_distance;

/// Edge of the condensed tree. `child` is a point index when below `n`,
/// otherwise a cluster label; the root cluster is labelled `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondensedEdge {
    pub parent: usize,
    pub child: usize,
    /// `1 / distance` at which the child leaves the parent; `f64::MAX` for
    /// distance zero.
    pub lambda: f64,
    pub child_size: usize,
}

pub fn lambda_of(distance: f64) -> f64 {
    if distance > 0.0 {
        1.0 / distance
    } else {
        f64::MAX
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

fn edge_key(w: f64, u: usize, v: usize) -> (f64, usize, usize) {
    (w, u.min(v), u.max(v))
}

fn key_less(x: (f64, usize, usize), y: (f64, usize, usize)) -> bool {
    x.0 < y.0 || (x.0 == y.0 && (x.1, x.2) < (y.1, y.2))
}

/// Prim's algorithm on the complete mutual-reachability graph. Edges are
/// totally ordered by `(weight, min index, max index)`, so the tree is unique.
pub fn mutual_reachability_mst(points: &[f64], dim: usize, core: &[f64]) -> Vec<MstEdge> {
    let n = core.len();
    let mut in_tree = vec![false; n];
    let mut best_w = vec![f64::INFINITY; n];
    let mut best_from = vec![usize::MAX; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let pc = &points[current * dim..(current + 1) * dim];
        let cc = core[current];
        let mut pick: Option<usize> = None;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let d = squared_distance(pc, &points[v * dim..(v + 1) * dim]).sqrt();
            let w = d.max(cc).max(core[v]);
            if best_from[v] == usize::MAX || key_less(edge_key(w, current, v), edge_key(best_w[v], best_from[v], v)) {
                best_w[v] = w;
                best_from[v] = current;
            }
            pick = match pick {
                Some(p) if !key_less(edge_key(best_w[v], best_from[v], v), edge_key(best_w[p], best_from[p], p)) => Some(p),
                _ => Some(v),
            };
        }
        let v = pick.expect("a vertex remains outside the tree");
        in_tree[v] = true;
        edges.push(MstEdge { a: best_from[v].min(v), b: best_from[v].max(v), weight: best_w[v] });
        current = v;
    }
    edges
}

/// Merge `n + i` of the single-linkage dendrogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Dendrogram from MST edges processed in ascending edge order.
pub fn single_linkage(n: usize, mst: &[MstEdge]) -> Vec<Merge> {
    let mut edges = mst.to_vec();
    edges.sort_by(|x, y| {
        x.weight.total_cmp(&y.weight).then((x.a, x.b).cmp(&(y.a, y.b)))
    });
    // union-find over node ids; a component's representative maps to its node
    let mut uf = UnionFind::new(n);
    let mut node_of = (0..n).collect::<Vec<_>>();
    let mut size = vec![1usize; 2 * n];
    let mut merges = Vec::with_capacity(edges.len());
    for e in edges {
        let (ra, rb) = (uf.find(e.a), uf.find(e.b));
        let (left, right) = (node_of[ra], node_of[rb]);
        let id = n + merges.len();
        size[id] = size[left] + size[right];
        merges.push(Merge { left, right, distance: e.weight, size: size[id] });
        uf.parent[rb] = ra;
        node_of[ra] = id;
    }
    merges
}

/// Condensed tree for clusters of at least `min_cluster_size` points.
pub fn condense(n: usize, merges: &[Merge], min_cluster_size: usize) -> Vec<CondensedEdge> {
    let size_of = |node: usize| if node < n { 1 } else { merges[node - n].size };
    let leaves_of = |node: usize, out: &mut Vec<usize>| {
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                let m = &merges[x - n];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
    };
    let mut edges = Vec::with_capacity(n + merges.len());
    if merges.is_empty() {
        return edges;
    }
    let root = n + merges.len() - 1;
    let mut next_label = n + 1;
    // (hierarchy node, condensed label)
    let mut queue = std::collections::VecDeque::from([(root, n)]);
    let mut fallen = Vec::new();
    while let Some((node, label)) = queue.pop_front() {
        let m = merges[node - n];
        let lambda = lambda_of(m.distance);
        let (ls, rs) = (size_of(m.left), size_of(m.right));
        let big_l = ls >= min_cluster_size;
        let big_r = rs >= min_cluster_size;
        if big_l && big_r {
            for (child, size) in [(m.left, ls), (m.right, rs)] {
                edges.push(CondensedEdge { parent: label, child: next_label, lambda, child_size: size });
                queue.push_back((child, next_label));
                next_label += 1;
            }
            continue;
        }
        for (child, big) in [(m.left, big_l), (m.right, big_r)] {
            if big {
                queue.push_back((child, label));
            } else {
                fallen.clear();
                leaves_of(child, &mut fallen);
                for &p in &fallen {
                    edges.push(CondensedEdge { parent: label, child: p, lambda, child_size: 1 });
                }
            }
        }
    }
    edges
}

/// Per-label birth lambda, parent and stability for clusters `n..`.
pub struct ClusterTable {
    pub n: usize,
    pub birth: Vec<f64>,
    pub parent: Vec<Option<usize>>,
    pub stability: Vec<f64>,
    pub children: Vec<Vec<usize>>,
}

impl ClusterTable {
    pub fn new(n: usize, condensed: &[CondensedEdge]) -> Self {
        let top = condensed.iter().map(|e| if e.child >= n { e.child } else { e.parent }).max().unwrap_or(n);
        let n_clusters = top + 1 - n;
        let mut birth = vec![0.0; n_clusters];
        let mut parent = vec![None; n_clusters];
        let mut children = vec![Vec::new(); n_clusters];
        for e in condensed.iter().filter(|e| e.child >= n) {
            birth[e.child - n] = e.lambda;
            parent[e.child - n] = Some(e.parent);
            children[e.parent - n].push(e.child);
        }
        let mut stability = vec![0.0; n_clusters];
        for e in condensed {
            stability[e.parent - n] += (e.lambda - birth[e.parent - n]) * e.child_size as f64;
        }
        Self { n, birth, parent, stability, children }
    }

    pub fn len(&self) -> usize {
        self.birth.len()
    }

    /// Excess-of-mass selection; the root is never selected. A cluster wins
    /// over its descendants when its stability is at least theirs.
    pub fn select_eom(&self) -> Vec<usize> {
        let k = self.len();
        let mut best = self.stability.clone();
        let mut selected = vec![false; k];
        for i in (1..k).rev() {
            let subtree: f64 = self.children[i].iter().map(|&c| best[c - self.n]).sum();
            if subtree > self.stability[i] {
                best[i] = subtree;
            } else {
                selected[i] = true;
                let mut stack: Vec<usize> = self.children[i].clone();
                while let Some(c) = stack.pop() {
                    selected[c - self.n] = false;
                    stack.extend_from_slice(&self.children[c - self.n]);
                }
            }
        }
        (1..k).filter(|&i| selected[i]).map(|i| i + self.n).collect()
    }

    /// Replaces clusters born closer than `epsilon` by the nearest ancestor
    /// born at a distance above `epsilon` (never the root).
    pub fn apply_epsilon(&self, selected: &[usize], epsilon: f64) -> Vec<usize> {
        if epsilon <= 0.0 {
            return selected.to_vec();
        }
        let root = self.n;
        let birth_distance = |c: usize| 1.0 / self.birth[c - self.n];
        let mut out: Vec<usize> = selected
            .iter()
            .map(|&c| {
                if birth_distance(c) >= epsilon {
                    return c;
                }
                let mut cur = c;
                loop {
                    let p = self.parent[cur - self.n].expect("non-root cluster has a parent");
                    if p == root {
                        return cur;
                    }
                    if birth_distance(p) > epsilon {
                        return p;
                    }
                    cur = p;
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        let has_selected_ancestor = |c: usize| {
            let mut cur = self.parent[c - self.n];
            while let Some(p) = cur {
                if out.binary_search(&p).is_ok() {
                    return true;
                }
                cur = self.parent[p - self.n];
            }
            false
        };
        out.iter().copied().filter(|&c| !has_selected_ancestor(c)).collect()
    }

    /// For every cluster label, the selected cluster it lies in, if any.
    pub fn owners(&self, selected: &[usize]) -> Vec<Option<usize>> {
        let mut owner = vec![None; self.len()];
        for i in 0..self.len() {
            let c = i + self.n;
            owner[i] = if selected.binary_search(&c).is_ok() {
                Some(c)
            } else {
                self.parent[i].and_then(|p| owner[p - self.n])
            };
        }
        owner
    }
}
