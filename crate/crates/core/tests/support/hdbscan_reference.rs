//! Brute-force HDBSCAN used as a test oracle. Cubic time, member-set based,
//! no shared code with the library beyond the point layout.

use std::collections::{BTreeMap, BTreeSet};

use pnr_pulsekit::hdbscan::ClusterModel;

/// Clustering described by member sets instead of labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Canonical {
    /// (members, birth lambda, parent members) for every non-root cluster.
    pub clusters: BTreeSet<(Vec<usize>, u64, Vec<usize>)>,
    /// (point, members of the innermost cluster it falls from, lambda).
    pub fallout: BTreeSet<(usize, Vec<usize>, u64)>,
    pub selected: BTreeSet<Vec<usize>>,
    pub noise: BTreeSet<usize>,
}

fn lam(d: f64) -> f64 {
    if d > 0.0 {
        1.0 / d
    } else {
        f64::MAX
    }
}

fn dist(points: &[f64], dim: usize, a: usize, b: usize) -> f64 {
    let mut s = 0.0;
    for j in 0..dim {
        let t = points[a * dim + j] - points[b * dim + j];
        s += t * t;
    }
    s.sqrt()
}

enum Node {
    Leaf(usize),
    Join(Box<Node>, Box<Node>, f64),
}

impl Node {
    fn members(&self, out: &mut Vec<usize>) {
        match self {
            Node::Leaf(p) => out.push(*p),
            Node::Join(l, r, _) => {
                l.members(out);
                r.members(out);
            }
        }
    }

    fn size(&self) -> usize {
        let mut v = Vec::new();
        self.members(&mut v);
        v.len()
    }
}

fn sorted_members(node: &Node) -> Vec<usize> {
    let mut v = Vec::new();
    node.members(&mut v);
    v.sort_unstable();
    v
}

struct Cluster {
    members: Vec<usize>,
    birth: f64,
    parent: Option<usize>,
    /// lambda at which each member leaves this cluster
    leave: BTreeMap<usize, f64>,
    children: Vec<usize>,
}

pub fn reference(points: &[f64], dim: usize, min_cluster_size: usize, min_samples: usize) -> Canonical {
    let n = points.len() / dim;
    let d: Vec<Vec<f64>> = (0..n).map(|a| (0..n).map(|b| dist(points, dim, a, b)).collect()).collect();
    let core: Vec<f64> = d
        .iter()
        .map(|row| {
            let mut r = row.clone();
            r.sort_by(f64::total_cmp);
            r[min_samples - 1]
        })
        .collect();

    // Kruskal over every pair, ties by (min index, max index)
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            edges.push((d[a][b].max(core[a]).max(core[b]), a, b));
        }
    }
    edges.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut comp: Vec<usize> = (0..n).collect();
    let mut trees: BTreeMap<usize, Node> = (0..n).map(|i| (i, Node::Leaf(i))).collect();
    for (w, a, b) in edges {
        let (ca, cb) = (comp[a], comp[b]);
        if ca == cb {
            continue;
        }
        for c in comp.iter_mut() {
            if *c == cb {
                *c = ca;
            }
        }
        let l = trees.remove(&ca).unwrap();
        let r = trees.remove(&cb).unwrap();
        trees.insert(ca, Node::Join(Box::new(l), Box::new(r), w));
    }
    let root = trees.into_values().next().unwrap();

    let mut clusters = vec![Cluster {
        members: sorted_members(&root),
        birth: 0.0,
        parent: None,
        leave: BTreeMap::new(),
        children: Vec::new(),
    }];
    descend(&root, 0, min_cluster_size, &mut clusters);

    let stability: Vec<f64> = clusters
        .iter()
        .map(|c| c.members.iter().map(|p| c.leave[p] - c.birth).sum())
        .collect();
    let mut selected = BTreeSet::new();
    for &c in &clusters[0].children {
        choose(c, &clusters, &stability, &mut selected);
    }

    let set = |i: usize| clusters[i].members.clone();
    let mut canonical = Canonical {
        clusters: BTreeSet::new(),
        fallout: BTreeSet::new(),
        selected: selected.iter().map(|&i| set(i)).collect(),
        noise: (0..n).collect(),
    };
    for (i, c) in clusters.iter().enumerate() {
        if let Some(p) = c.parent {
            canonical.clusters.insert((set(i), c.birth.to_bits(), set(p)));
        }
        let inner: BTreeSet<usize> = c.children.iter().flat_map(|&k| clusters[k].members.clone()).collect();
        for (&p, &l) in &c.leave {
            if !inner.contains(&p) {
                canonical.fallout.insert((p, set(i), l.to_bits()));
            }
        }
    }
    for &s in &selected {
        for p in &clusters[s].members {
            canonical.noise.remove(p);
        }
    }
    canonical
}

fn descend(node: &Node, cluster: usize, mcs: usize, clusters: &mut Vec<Cluster>) {
    let Node::Join(l, r, w) = node else {
        // a single point that is the whole cluster: it never leaves
        let mut m = Vec::new();
        node.members(&mut m);
        let birth = clusters[cluster].birth;
        for p in m {
            clusters[cluster].leave.insert(p, birth);
        }
        return;
    };
    let lambda = lam(*w);
    let (big_l, big_r) = (l.size() >= mcs, r.size() >= mcs);
    if big_l && big_r {
        for side in [l, r] {
            let members = sorted_members(side);
            for &p in &members {
                clusters[cluster].leave.insert(p, lambda);
            }
            clusters.push(Cluster { members, birth: lambda, parent: Some(cluster), leave: BTreeMap::new(), children: Vec::new() });
            let id = clusters.len() - 1;
            clusters[cluster].children.push(id);
            descend(side, id, mcs, clusters);
        }
        return;
    }
    for (side, big) in [(l, big_l), (r, big_r)] {
        if big {
            descend(side, cluster, mcs, clusters);
        } else {
            for p in sorted_members(side) {
                clusters[cluster].leave.insert(p, lambda);
            }
        }
    }
}

/// Recursive excess of mass; returns the best achievable stability.
fn choose(c: usize, clusters: &[Cluster], stability: &[f64], out: &mut BTreeSet<usize>) -> f64 {
    let mut below = BTreeSet::new();
    let subtree: f64 = clusters[c].children.iter().map(|&k| choose(k, clusters, stability, &mut below)).sum();
    if clusters[c].children.is_empty() || stability[c] >= subtree {
        out.insert(c);
        stability[c]
    } else {
        out.extend(below);
        subtree
    }
}

/// Same canonical form computed from a fitted library model.
pub fn canonical_of(model: &ClusterModel) -> Canonical {
    let n = model.n_points();
    let tree = &model.condensed_tree;
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    // children carry larger labels than parents, so walk labels downwards
    let mut labels: Vec<usize> = tree.iter().map(|e| e.parent).collect();
    labels.sort_unstable();
    labels.dedup();
    for &c in labels.iter().rev() {
        let mut m = Vec::new();
        for e in tree.iter().filter(|e| e.parent == c) {
            if e.child < n {
                m.push(e.child);
            } else {
                m.extend(members.get(&e.child).cloned().unwrap_or_default());
            }
        }
        m.sort_unstable();
        members.insert(c, m);
    }
    let set = |c: usize| members.get(&c).cloned().unwrap_or_default();
    let mut out = Canonical {
        clusters: BTreeSet::new(),
        fallout: BTreeSet::new(),
        selected: model.cluster_labels.iter().map(|&c| set(c)).collect(),
        noise: (0..n).filter(|&i| model.assignments[i].is_none()).collect(),
    };
    for e in tree {
        if e.child >= n {
            out.clusters.insert((set(e.child), e.lambda.to_bits(), set(e.parent)));
        } else {
            out.fallout.insert((e.child, set(e.parent), e.lambda.to_bits()));
        }
    }
    out
}

/// Random instance: points, dim, min_cluster_size, min_samples. Every third
/// instance sits on a coarse grid so that distances tie.
pub fn random_instance(seed: u64) -> (Vec<f64>, usize, usize, usize) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(1..=3);
    let n = rng.random_range(8..=60);
    let mcs = rng.random_range(2..=8.min(n));
    let ms = rng.random_range(1..=mcs);
    let grid = seed % 3 == 0;
    let centres: Vec<f64> = (0..3 * dim).map(|_| rng.random_range(0.0..10.0)).collect();
    let mut points = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let c = rng.random_range(0..3);
        for j in 0..dim {
            let v = centres[c * dim + j] + rng.random_range(-1.5..1.5);
            points.push(if grid { v.round() } else { v });
        }
    }
    (points, dim, mcs, ms)
}
