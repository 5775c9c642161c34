//! Mapper graphs over labeled point clouds, density-ranked region filtering
//! and class-colored export.

mod cloud;
mod export;
mod lens;

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Label;

pub use cloud::{read_cloud, write_cloud, PointCloud};
pub use export::{export_graph, import_graph, ExportFormat};
pub use lens::{kde_log_density, lens, relative_density, scott_bandwidth, LensKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverSpec {
    pub intervals_per_axis: usize,
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    /// Single-linkage cut on min–max-normalized coordinates.
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    /// Sorted point indices.
    pub members: Vec<usize>,
    /// Mean relative kernel density of the members, in `(0, 1]`.
    pub density: f64,
    /// Fraction of members labeled fake.
    pub fake_fraction: f64,
    /// Cover cell, one interval index per lens axis.
    pub cell: Vec<usize>,
}

impl Node {
    /// Share of the majority class.
    pub fn purity(&self) -> f64 {
        self.fake_fraction.max(1.0 - self.fake_fraction)
    }
}

/// Sorted node member lists and sorted member-list edge pairs.
pub type Canonical = (Vec<Vec<usize>>, Vec<(Vec<usize>, Vec<usize>)>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapperGraph {
    pub n_points: usize,
    pub lens: String,
    pub cover: CoverSpec,
    pub cluster: ClusterSpec,
    /// Set once the graph has been through [`hdr_filter`].
    pub mass_threshold: Option<f64>,
    pub nodes: Vec<Node>,
    /// Node id pairs `a < b`, sorted.
    pub edges: Vec<[usize; 2]>,
}

impl MapperGraph {
    /// Node member lists and member-list edges, sorted, so graphs built from
    /// reordered points compare equal once indices are mapped back.
    pub fn canonical(&self) -> Canonical {
        let mut nodes: Vec<Vec<usize>> = self.nodes.iter().map(|n| n.members.clone()).collect();
        nodes.sort();
        let mut edges: Vec<(Vec<usize>, Vec<usize>)> = self
            .edges
            .iter()
            .map(|&[a, b]| {
                let (x, y) = (self.nodes[a].members.clone(), self.nodes[b].members.clone());
                if x <= y {
                    (x, y)
                } else {
                    (y, x)
                }
            })
            .collect();
        edges.sort();
        (nodes, edges)
    }

    /// Fraction of nodes whose majority class holds at least `purity` of the members.
    pub fn separation_score(&self, purity: f64) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        let pure = self.nodes.iter().filter(|n| n.purity() >= purity - 1e-12).count();
        pure as f64 / self.nodes.len() as f64
    }
}

/// Purity level used by [`MapperGraph::separation_score`] in reports.
pub const PURITY_LEVEL: f64 = 0.9;

/// Overlapping uniform intervals `[start, end]` over `[lo, hi]`.
pub fn cover_intervals(lo: f64, hi: f64, count: usize, overlap: f64) -> Vec<(f64, f64)> {
    if hi <= lo {
        return vec![(lo, hi)];
    }
    let len = (hi - lo) / (count as f64 - (count as f64 - 1.0) * overlap);
    let step = len * (1.0 - overlap);
    (0..count)
        .map(|i| {
            let start = lo + i as f64 * step;
            let end = if i + 1 == count { hi } else { start + len };
            (start, end)
        })
        .collect()
}

/// Coordinates rescaled to `[0, 1]` per dimension; constant dimensions become 0.
pub fn min_max_normalize(points: &Array2<f64>) -> Array2<f64> {
    let mut out = points.clone();
    for mut col in out.axis_iter_mut(Axis(1)) {
        let lo = col.fold(f64::INFINITY, |a, &b| a.min(b));
        let hi = col.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let span = hi - lo;
        col.mapv_inplace(|v| if span > 0.0 { (v - lo) / span } else { 0.0 });
    }
    out
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage clusters of `members` (indices into `coords`) at distance ≤ `eps`,
/// each sorted, ordered by smallest member.
pub fn single_linkage(coords: &Array2<f64>, members: &[usize], eps: f64) -> Vec<Vec<usize>> {
    let m = members.len();
    let mut parent: Vec<usize> = (0..m).collect();
    let eps2 = eps * eps;
    for a in 0..m {
        let pa = coords.row(members[a]);
        for b in a + 1..m {
            let pb = coords.row(members[b]);
            let d2: f64 = pa.iter().zip(pb.iter()).map(|(x, y)| (x - y).powi(2)).sum();
            if d2 <= eps2 {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..m {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(members[i]);
    }
    let mut out: Vec<Vec<usize>> = groups
        .into_values()
        .map(|mut g| {
            g.sort_unstable();
            g
        })
        .collect();
    out.sort_by_key(|g| g[0]);
    out
}

/// Mapper graph of `cloud` under precomputed `lens_values` `[n × m]`.
pub fn build_mapper(
    cloud: &PointCloud,
    lens_values: &Array2<f64>,
    lens_name: &str,
    cover: &CoverSpec,
    cluster: &ClusterSpec,
) -> Result<MapperGraph> {
    if cover.intervals_per_axis == 0 {
        return Err(Error::invalid("intervals_per_axis must be ≥ 1"));
    }
    if !(0.0..1.0).contains(&cover.overlap) {
        return Err(Error::invalid(format!(
            "overlap must lie in [0, 1), got {}",
            cover.overlap
        )));
    }
    if !(cluster.eps > 0.0) {
        return Err(Error::invalid(format!(
            "cluster eps must be positive, got {}",
            cluster.eps
        )));
    }
    let n = cloud.len();
    let mut graph = MapperGraph {
        n_points: n,
        lens: lens_name.to_string(),
        cover: cover.clone(),
        cluster: cluster.clone(),
        mass_threshold: None,
        nodes: Vec::new(),
        edges: Vec::new(),
    };
    if n == 0 {
        return Ok(graph);
    }
    if lens_values.nrows() != n || lens_values.ncols() == 0 {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} lens rows"),
            got: format!("{} × {}", lens_values.nrows(), lens_values.ncols()),
        });
    }
    let coords = min_max_normalize(&cloud.points);
    let density = if n > 1 {
        relative_density(&cloud.points)
    } else {
        ndarray::Array1::ones(1)
    };

    // Per axis, the intervals containing each point.
    let axes = lens_values.ncols();
    let mut per_axis: Vec<Vec<Vec<usize>>> = Vec::with_capacity(axes);
    let mut counts = Vec::with_capacity(axes);
    for col in lens_values.columns() {
        let lo = col.fold(f64::INFINITY, |a, &b| a.min(b));
        let hi = col.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let intervals = cover_intervals(lo, hi, cover.intervals_per_axis, cover.overlap);
        let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        per_axis.push(
            col.iter()
                .map(|&v| {
                    (0..intervals.len())
                        .filter(|&i| v >= intervals[i].0 - tol && v <= intervals[i].1 + tol)
                        .collect()
                })
                .collect(),
        );
        counts.push(intervals.len());
    }

    let mut cells: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for p in 0..n {
        let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
        for axis in &per_axis {
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    axis[p].iter().map(move |&i| {
                        let mut c = prefix.clone();
                        c.push(i);
                        c
                    })
                })
                .collect();
        }
        for cell in combos {
            cells.entry(cell).or_default().push(p);
        }
    }

    for (cell, members) in cells {
        for group in single_linkage(&coords, &members, cluster.eps) {
            let fakes = group.iter().filter(|&&i| cloud.labels[i] == Label::Fake).count();
            let dens = group.iter().map(|&i| density[i]).sum::<f64>() / group.len() as f64;
            graph.nodes.push(Node {
                fake_fraction: fakes as f64 / group.len() as f64,
                density: dens,
                members: group,
                cell: cell.clone(),
            });
        }
    }
    graph.edges = shared_member_edges(&graph.nodes, n);
    Ok(graph)
}

fn shared_member_edges(nodes: &[Node], n_points: usize) -> Vec<[usize; 2]> {
    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); n_points];
    for (id, node) in nodes.iter().enumerate() {
        for &m in &node.members {
            owners[m].push(id);
        }
    }
    let mut edges = std::collections::BTreeSet::new();
    for ids in owners {
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                edges.insert([a.min(b), a.max(b)]);
            }
        }
    }
    edges.into_iter().collect()
}

/// Keeps the smallest set of densest nodes whose member counts reach
/// `mass_threshold` of the total member count; ties go to the lower id.
pub fn hdr_filter(graph: &MapperGraph, mass_threshold: f64) -> Result<MapperGraph> {
    if !(mass_threshold > 0.0 && mass_threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "mass threshold must lie in (0, 1], got {mass_threshold}"
        )));
    }
    let total: usize = graph.nodes.iter().map(|n| n.members.len()).sum();
    let mut order: Vec<usize> = (0..graph.nodes.len()).collect();
    order.sort_by(|&a, &b| {
        graph.nodes[b]
            .density
            .total_cmp(&graph.nodes[a].density)
            .then(a.cmp(&b))
    });
    let target = mass_threshold * total as f64;
    let mut kept = vec![false; graph.nodes.len()];
    let mut mass = 0usize;
    for id in order {
        if mass as f64 >= target - 1e-9 {
            break;
        }
        kept[id] = true;
        mass += graph.nodes[id].members.len();
    }
    let mut remap = vec![usize::MAX; graph.nodes.len()];
    let mut nodes = Vec::new();
    for (id, node) in graph.nodes.iter().enumerate() {
        if kept[id] {
            remap[id] = nodes.len();
            nodes.push(node.clone());
        }
    }
    let edges = graph
        .edges
        .iter()
        .filter(|[a, b]| kept[*a] && kept[*b])
        .map(|[a, b]| [remap[*a], remap[*b]])
        .collect();
    Ok(MapperGraph {
        nodes,
        edges,
        mass_threshold: Some(mass_threshold),
        ..graph.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapperConfig {
    pub lens: LensKind,
    pub intervals_per_axis: usize,
    pub overlap: f64,
    pub cluster_eps: f64,
    /// Applied after construction when set.
    pub mass_threshold: Option<f64>,
}

impl Default for MapperConfig {
    fn default() -> Self {
        Self {
            lens: LensKind::Pca2,
            intervals_per_axis: 8,
            overlap: 0.3,
            cluster_eps: 0.65,
            mass_threshold: Some(0.65),
        }
    }
}

/// Lens, cover, clustering and the optional density filter in one call.
pub fn run_mapper(cloud: &PointCloud, cfg: &MapperConfig) -> Result<MapperGraph> {
    let cover = CoverSpec {
        intervals_per_axis: cfg.intervals_per_axis,
        overlap: cfg.overlap,
    };
    let cluster = ClusterSpec { eps: cfg.cluster_eps };
    let graph = match cloud.len() {
        0 | 1 => {
            let values = Array2::zeros((cloud.len(), 1));
            build_mapper(cloud, &values, &cfg.lens.name(), &cover, &cluster)?
        }
        _ => build_mapper(cloud, &lens(cloud, &cfg.lens)?, &cfg.lens.name(), &cover, &cluster)?,
    };
    match cfg.mass_threshold {
        Some(t) => hdr_filter(&graph, t),
        None => Ok(graph),
    }
}
