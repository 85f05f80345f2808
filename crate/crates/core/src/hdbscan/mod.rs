//! Density-based clustering of factor scores (HDBSCAN) with photon-number
//! mapping and nearest-exemplar prediction.

pub mod tree;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::filter_ip::{bin_by_valleys, ValleyParams};
use crate::neighbors::NeighborIndex;
use crate::par::{self, Exec};
use crate::trace::Label;

pub use tree::CondensedEdge;
use tree::{condense, mutual_reachability_mst, single_linkage, ClusterTable};

pub const DEFAULT_MERGE_GAP_FRACTION: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    /// Neighbour rank defining the core distance; the point itself is rank 1.
    pub min_samples: usize,
    pub selection_epsilon: f64,
}

impl Default for HdbscanParams {
    fn default() -> Self {
        Self { min_cluster_size: 50, min_samples: 10, selection_epsilon: 0.0 }
    }
}

impl HdbscanParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 2 {
            return Err(invalid("min_cluster_size must be at least 2"));
        }
        if self.min_samples < 1 {
            return Err(invalid("min_samples must be at least 1"));
        }
        if self.min_samples > self.min_cluster_size {
            return Err(invalid(format!(
                "min_samples ({}) must not exceed min_cluster_size ({})",
                self.min_samples, self.min_cluster_size
            )));
        }
        if !(self.selection_epsilon >= 0.0 && self.selection_epsilon.is_finite()) {
            return Err(invalid("selection_epsilon must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterModel {
    pub params: HdbscanParams,
    pub dim: usize,
    /// Row-major fitted points.
    pub points: Vec<f64>,
    /// Cluster id per point; `None` is noise (stored as -1).
    #[serde(with = "noise_as_minus_one")]
    pub assignments: Vec<Option<usize>>,
    pub centroids: Vec<Vec<f64>>,
    pub core_distances: Vec<f64>,
    /// Cluster id to photon number. Clusters missing here predict U.
    pub photon_map: BTreeMap<usize, usize>,
    /// Condensed-tree label of each cluster id.
    pub cluster_labels: Vec<usize>,
    pub condensed_tree: Vec<CondensedEdge>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(skip)]
    index: Option<NeighborIndex>,
}

mod noise_as_minus_one {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Option<usize>], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|a| a.map_or(-1, |c| c as i64)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Option<usize>>, D::Error> {
        let raw = Vec::<i64>::deserialize(d)?;
        Ok(raw.into_iter().map(|c| usize::try_from(c).ok()).collect())
    }
}

/// Clusters `points` (row-major, `dim` columns) and assigns photon numbers
/// with the default merge rule.
pub fn fit(points: &[f64], dim: usize, params: &HdbscanParams, exec: Exec) -> Result<ClusterModel> {
    params.validate()?;
    if dim == 0 || points.len() % dim != 0 {
        return Err(invalid("point buffer is not a whole number of rows"));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(invalid("coordinates must be finite"));
    }
    let n = points.len() / dim;
    if n < params.min_cluster_size {
        return Err(Error::TooFewPoints { available: n, needed: params.min_cluster_size });
    }

    let index = NeighborIndex::new(points, dim);
    let k = params.min_samples;
    let core_distances = par::map_indexed(exec, n, |i| {
        let nb = index.k_nearest(&points[i * dim..(i + 1) * dim], k);
        nb[k - 1].dist2.sqrt()
    });
    let mst = mutual_reachability_mst(points, dim, &core_distances);
    let merges = single_linkage(n, &mst);
    let condensed = condense(n, &merges, params.min_cluster_size);
    let table = ClusterTable::new(n, &condensed);
    let eom = table.select_eom();
    let selected = table.apply_epsilon(&eom, params.selection_epsilon);
    let owners = table.owners(&selected);

    let cluster_id: BTreeMap<usize, usize> = selected.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut assignments = vec![None; n];
    for e in condensed.iter().filter(|e| e.child < n) {
        assignments[e.child] = owners[e.parent - n].map(|c| cluster_id[&c]);
    }
    let centroids = centroids_of(points, dim, &assignments, selected.len());

    let mut warnings = Vec::new();
    if selected.len() < 2 {
        let first: Vec<f64> = points.iter().step_by(dim).copied().collect();
        if let Ok(b) = bin_by_valleys(&first, &ValleyParams::default()) {
            if b.peaks.len() >= 2 {
                let w = format!(
                    "found {} cluster(s) although the first coordinate shows {} valley-separated peaks",
                    selected.len(),
                    b.peaks.len()
                );
                log::warn!("{w}");
                warnings.push(w);
            }
        }
    }

    let mut model = ClusterModel {
        params: *params,
        dim,
        points: points.to_vec(),
        assignments,
        photon_map: BTreeMap::new(),
        cluster_labels: selected,
        centroids,
        core_distances,
        condensed_tree: condensed,
        warnings,
        index: Some(index),
    };
    model.assign_photon_numbers(DEFAULT_MERGE_GAP_FRACTION)?;
    Ok(model)
}

fn centroids_of(points: &[f64], dim: usize, assignments: &[Option<usize>], k: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (i, a) in assignments.iter().enumerate() {
        if let Some(c) = *a {
            counts[c] += 1;
            sums[c].iter_mut().zip(&points[i * dim..(i + 1) * dim]).for_each(|(s, v)| *s += v);
        }
    }
    sums.into_iter().zip(counts).map(|(s, c)| s.into_iter().map(|v| v / c as f64).collect()).collect()
}

/// Orders clusters by the first centroid coordinate and numbers them
/// 0, 1, 2, ...; neighbours closer than `merge_gap_fraction` times the
/// median neighbour gap share a number.
pub fn map_clusters_to_photon_numbers(centroids: &[Vec<f64>], merge_gap_fraction: f64) -> Result<BTreeMap<usize, usize>> {
    if !(merge_gap_fraction >= 0.0) {
        return Err(invalid("merge_gap_fraction must be >= 0"));
    }
    let mut order: Vec<usize> = (0..centroids.len()).collect();
    order.sort_by(|&a, &b| centroids[a][0].total_cmp(&centroids[b][0]).then(a.cmp(&b)));
    let gaps: Vec<f64> = order.windows(2).map(|w| centroids[w[1]][0] - centroids[w[0]][0]).collect();
    let median = median(&gaps);
    let mut map = BTreeMap::new();
    let mut photons = 0;
    for (i, &c) in order.iter().enumerate() {
        if i > 0 && gaps[i - 1] >= merge_gap_fraction * median {
            photons += 1;
        }
        if photons >= crate::trace::MAX_PHOTONS {
            // beyond the label ceiling; these clusters predict U
            break;
        }
        map.insert(c, photons);
    }
    Ok(map)
}

/// How cluster centroids are ordered before numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapAxis {
    /// First factor score, gap merge relative to the median adjacent gap.
    #[default]
    FirstScore,
    /// Direction in the plane of the first two scores along which the
    /// centroids collapse into the fewest separated groups. Sub-clusters
    /// spread by the tails of earlier pulses line up along one direction;
    /// projecting across it stacks them onto their photon number.
    Fitted,
}

impl std::str::FromStr for MapAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first-score" | "first_score" => Ok(MapAxis::FirstScore),
            "fitted" => Ok(MapAxis::Fitted),
            _ => Err(invalid(format!("unknown map axis '{s}' (first-score|fitted)"))),
        }
    }
}

const AXIS_STEPS: usize = 3600;

/// Unit direction in the first two coordinates maximising the comb score
/// sum(gap^2) / range^2 of the projected centroids, oriented along +x.
pub fn fitted_axis(centroids: &[Vec<f64>]) -> Vec<f64> {
    let dim = centroids.first().map_or(1, Vec::len);
    let mut axis = vec![0.0; dim];
    if dim == 1 || centroids.len() < 3 {
        axis[0] = 1.0;
        return axis;
    }
    let mut proj = Vec::with_capacity(centroids.len());
    let scored: Vec<(f64, f64)> = (0..AXIS_STEPS)
        .filter_map(|step| {
            let theta = std::f64::consts::PI * (step as f64 / AXIS_STEPS as f64 - 0.5);
            let (sin, cos) = theta.sin_cos();
            proj.clear();
            proj.extend(centroids.iter().map(|c| cos * c[0] + sin * c[1]));
            proj.sort_by(f64::total_cmp);
            let range = proj[proj.len() - 1] - proj[0];
            (range > 0.0).then(|| {
                (proj.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / (range * range), theta)
            })
        })
        .collect();
    let top = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    // near-ties (collinear centroids score the same at every angle) go to
    // the direction closest to the first score
    let best = scored
        .iter()
        .filter(|s| s.0 >= top * (1.0 - 1e-9))
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map_or((0.0, 0.0), |s| *s);
    axis[0] = best.1.cos();
    axis[1] = best.1.sin();
    axis
}

/// Numbers clusters along the fitted axis. Groups are split at gaps of at
/// least `merge_gap_fraction` times the median of those splitting gaps
/// (iterated to a fixed point), so tight sub-cluster stacks share a number.
pub fn map_clusters_along_fitted_axis(centroids: &[Vec<f64>], merge_gap_fraction: f64) -> Result<BTreeMap<usize, usize>> {
    if !(merge_gap_fraction > 0.0 && merge_gap_fraction < 1.0) {
        return Err(invalid("merge_gap_fraction must be in (0, 1) for the fitted axis"));
    }
    let axis = fitted_axis(centroids);
    let proj: Vec<f64> = centroids.iter().map(|c| c.iter().zip(&axis).map(|(a, b)| a * b).sum()).collect();
    let mut order: Vec<usize> = (0..proj.len()).collect();
    order.sort_by(|&a, &b| proj[a].total_cmp(&proj[b]).then(a.cmp(&b)));
    let gaps: Vec<f64> = order.windows(2).map(|w| proj[w[1]] - proj[w[0]]).collect();
    let mut threshold = merge_gap_fraction * gaps.iter().copied().fold(0.0, f64::max);
    for _ in 0..100 {
        let splitting: Vec<f64> = gaps.iter().copied().filter(|&g| g >= threshold).collect();
        let next = merge_gap_fraction * median(&splitting);
        if next == threshold {
            break;
        }
        threshold = next;
    }
    let mut map = BTreeMap::new();
    let mut photons = 0;
    for (i, &c) in order.iter().enumerate() {
        if i > 0 && gaps[i - 1] >= threshold && threshold > 0.0 {
            photons += 1;
        }
        if photons >= crate::trace::MAX_PHOTONS {
            break;
        }
        map.insert(c, photons);
    }
    Ok(map)
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let mid = s.len() / 2;
    if s.len() % 2 == 1 {
        s[mid]
    } else {
        0.5 * (s[mid - 1] + s[mid])
    }
}

impl ClusterModel {
    pub fn n_points(&self) -> usize {
        self.core_distances.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn noise_fraction(&self) -> f64 {
        self.assignments.iter().filter(|a| a.is_none()).count() as f64 / self.n_points() as f64
    }

    pub fn assign_photon_numbers(&mut self, merge_gap_fraction: f64) -> Result<()> {
        self.assign_photon_numbers_along(MapAxis::FirstScore, merge_gap_fraction)
    }

    pub fn assign_photon_numbers_along(&mut self, axis: MapAxis, merge_gap_fraction: f64) -> Result<()> {
        self.photon_map = match axis {
            MapAxis::FirstScore => map_clusters_to_photon_numbers(&self.centroids, merge_gap_fraction)?,
            MapAxis::Fitted => map_clusters_along_fitted_axis(&self.centroids, merge_gap_fraction)?,
        };
        Ok(())
    }

    /// Replaces the automatic map verbatim.
    pub fn set_photon_map(&mut self, map: BTreeMap<usize, usize>) -> Result<()> {
        if let Some(bad) = map.keys().find(|&&c| c >= self.n_clusters()) {
            return Err(invalid(format!("cluster {bad} does not exist ({} clusters)", self.n_clusters())));
        }
        if let Some(bad) = map.values().find(|&&p| p >= crate::trace::MAX_PHOTONS) {
            return Err(invalid(format!("photon number {bad} exceeds the label ceiling")));
        }
        self.photon_map = map;
        Ok(())
    }

    /// Photon-number label of every fitted point.
    pub fn labels(&self) -> Vec<Label> {
        self.assignments.iter().map(|a| self.label_of(*a)).collect()
    }

    fn label_of(&self, cluster: Option<usize>) -> Label {
        cluster.and_then(|c| self.photon_map.get(&c)).map_or(Label::UNCLASSIFIED, |&p| Label::photons(p))
    }

    fn index(&mut self) -> &NeighborIndex {
        if self.index.is_none() {
            self.index = Some(NeighborIndex::new(&self.points, self.dim));
        }
        self.index.as_ref().expect("index was just built")
    }

    /// Rebuilds the search index after deserialisation; idempotent.
    pub fn prepare(&mut self) {
        self.index();
    }

    /// Label of each query row: the nearest fitted point's photon number if
    /// it is clustered and within `max(core distance, selection_epsilon)`.
    pub fn predict(&self, queries: &[f64], exec: Exec) -> Result<Vec<Label>> {
        if queries.len() % self.dim != 0 {
            return Err(Error::LengthMismatch { expected: self.dim, actual: queries.len() % self.dim });
        }
        let built;
        let index = match &self.index {
            Some(i) => i,
            None => {
                built = NeighborIndex::new(&self.points, self.dim);
                &built
            }
        };
        let dim = self.dim;
        Ok(par::map_indexed(exec, queries.len() / dim, |q| {
            let nb = index.k_nearest(&queries[q * dim..(q + 1) * dim], 1)[0];
            let p = nb.index;
            match self.assignments[p] {
                None => Label::UNCLASSIFIED,
                Some(_) if nb.dist2.sqrt() > self.core_distances[p].max(self.params.selection_epsilon) => Label::UNCLASSIFIED,
                a => self.label_of(a),
            }
        }))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut m: ClusterModel = serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let n = m.core_distances.len();
        if m.dim == 0 || m.points.len() != n * m.dim || m.assignments.len() != n {
            return Err(Error::Format("cluster model arrays disagree in length".into()));
        }
        if m.assignments.iter().flatten().any(|&c| c >= m.centroids.len()) {
            return Err(Error::Format("assignment refers to a missing cluster".into()));
        }
        m.prepare();
        Ok(m)
    }
}
