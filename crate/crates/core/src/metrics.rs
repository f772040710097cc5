//! Manifold graph metrics over NNK neighborhoods.
//!
//! Three local measurements are taken for every node of a graph:
//!
//! * the polytope diameter, the largest distance between two ℓ2-normalized
//!   neighbors (0 for a collapsed mapping, 2 for antipodal neighbors);
//! * the affinity between the subspaces spanned by the neighbors of two
//!   adjacent nodes, computed from the principal angles between them;
//! * the neighbor count, used as a local intrinsic dimension.
//!
//! Per-sample values are pooled over a dataset into a [`MetricDistribution`]
//! (mean and population standard deviation), and the distributions of one
//! model are flattened into a fixed-order feature vector.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nnk::{unit, NNKGraph, Neighborhood};
use crate::store::{Policy, ViewSet};

pub const EQUIVARIANCE: &str = "Equivariance";
pub const AFFINITY: &str = "Affinity";
pub const NEIGHBORS: &str = "Nb. of neighbors";

/// Relative cutoff below which singular directions are dropped.
const RELATIVE_RANK_TOL: f64 = 1e-8;
/// Absolute cutoff on the largest singular value.
const ABSOLUTE_RANK_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("neighborhood of node {0} is empty")]
    EmptyNeighborhood(usize),
    #[error("vector {node} has zero norm")]
    DegenerateVector { node: usize },
    #[error("neighbor vectors span no direction (largest singular value {0:e})")]
    DegenerateSubspace(f64),
    #[error("cannot aggregate an empty list of values")]
    EmptyInput,
    #[error("missing distribution {0}")]
    MissingFeature(String),
    #[error("item {item} is absent from the {which} graph")]
    ItemAbsent { item: usize, which: &'static str },
    #[error("graph has {graph} nodes but view-set has {views}")]
    SizeMismatch { graph: usize, views: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Divide the squared cosines by the product of the neighbor counts.
    #[default]
    Paper,
    /// Divide by the number of principal angles, `min(rank_a, rank_b)`.
    Min,
}

impl FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Self::Paper),
            "min" => Ok(Self::Min),
            other => Err(format!("unknown normalization `{other}` (expected paper|min)")),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Paper => "paper",
            Self::Min => "min",
        })
    }
}

/// Orthonormal basis (columns) of the span of a neighbor set.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceBasis {
    pub basis: DMatrix<f64>,
    /// Neighbor count before rank reduction.
    pub declared_count: usize,
}

impl SubspaceBasis {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Basis of the span of the ℓ2-normalized `vectors`.
    pub fn from_vectors<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Self, MetricError> {
        if vectors.is_empty() {
            return Err(MetricError::DegenerateSubspace(0.0));
        }
        let dim = vectors[0].as_ref().len();
        let units = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| unit(v.as_ref()).ok_or(MetricError::DegenerateVector { node: i }))
            .collect::<Result<Vec<_>, _>>()?;
        let m = DMatrix::from_fn(dim, units.len(), |r, c| units[c][r]);
        let svd = m.svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        if smax <= ABSOLUTE_RANK_TOL {
            return Err(MetricError::DegenerateSubspace(smax));
        }
        let keep: Vec<usize> = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|&(_, &s)| s > RELATIVE_RANK_TOL * smax)
            .map(|(i, _)| i)
            .collect();
        let basis = DMatrix::from_fn(dim, keep.len(), |r, c| u[(r, keep[c])]);
        Ok(Self { basis, declared_count: vectors.len() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub diameter: f64,
    pub intrinsic_dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeAffinity {
    pub from: usize,
    pub to: usize,
    pub affinity: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphMetrics {
    /// `None` for isolated nodes.
    pub nodes: Vec<Option<NodeMetrics>>,
    pub edges: Vec<EdgeAffinity>,
    /// Edges skipped because one endpoint had a degenerate subspace.
    pub skipped_edges: usize,
    pub isolated_nodes: usize,
}

fn neighbor_vectors<'a>(nb: &Neighborhood, views: &'a ViewSet) -> Result<Vec<&'a [f64]>, MetricError> {
    if nb.neighbors.is_empty() {
        return Err(MetricError::EmptyNeighborhood(nb.query));
    }
    Ok(nb.neighbors.iter().map(|&i| views.members[i].as_slice()).collect())
}

/// Largest distance between two ℓ2-normalized neighbors; 0 for a single
/// neighbor.
pub fn polytope_diameter(nb: &Neighborhood, views: &ViewSet) -> Result<f64, MetricError> {
    let vectors = neighbor_vectors(nb, views)?;
    let units = nb
        .neighbors
        .iter()
        .zip(&vectors)
        .map(|(&node, v)| unit(v).ok_or(MetricError::DegenerateVector { node }))
        .collect::<Result<Vec<_>, _>>()?;
    let mut diameter: f64 = 0.0;
    for (k, a) in units.iter().enumerate() {
        for b in &units[k + 1..] {
            let d = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            diameter = diameter.max(d);
        }
    }
    Ok(diameter.min(2.0))
}

pub fn neighbor_subspace(nb: &Neighborhood, views: &ViewSet) -> Result<SubspaceBasis, MetricError> {
    let vectors = neighbor_vectors(nb, views)?;
    SubspaceBasis::from_vectors(&vectors).map_err(|e| match e {
        MetricError::DegenerateVector { node } => {
            MetricError::DegenerateVector { node: nb.neighbors[node] }
        }
        other => other,
    })
}

/// Cosines of the principal angles between two subspaces, largest first.
pub fn principal_cosines(a: &SubspaceBasis, b: &SubspaceBasis) -> Vec<f64> {
    let m = a.basis.transpose() * &b.basis;
    let mut cos: Vec<f64> =
        m.singular_values().iter().map(|&s| s.clamp(0.0, 1.0)).collect();
    cos.sort_by(|x, y| y.total_cmp(x));
    cos
}

pub fn subspace_affinity(a: &SubspaceBasis, b: &SubspaceBasis, normalization: Normalization) -> f64 {
    let sum_sq: f64 = principal_cosines(a, b).iter().map(|c| c * c).sum();
    let denom = match normalization {
        Normalization::Paper => (a.declared_count * b.declared_count) as f64,
        Normalization::Min => a.rank().min(b.rank()) as f64,
    };
    (sum_sq / denom).clamp(0.0, 1.0).sqrt()
}

pub fn graph_metrics(
    g: &NNKGraph,
    views: &ViewSet,
    normalization: Normalization,
) -> Result<GraphMetrics, MetricError> {
    if g.len() != views.len() {
        return Err(MetricError::SizeMismatch { graph: g.len(), views: views.len() });
    }
    let mut out = GraphMetrics::default();
    let mut subspaces = Vec::with_capacity(g.len());
    for nb in &g.neighborhoods {
        if nb.is_isolated() {
            out.nodes.push(None);
            out.isolated_nodes += 1;
            subspaces.push(None);
            continue;
        }
        out.nodes.push(Some(NodeMetrics {
            diameter: polytope_diameter(nb, views)?,
            intrinsic_dim: nb.len(),
        }));
        subspaces.push(neighbor_subspace(nb, views).ok());
    }
    for nb in &g.neighborhoods {
        for &to in &nb.neighbors {
            match (&subspaces[nb.query], &subspaces[to]) {
                (Some(a), Some(b)) => out.edges.push(EdgeAffinity {
                    from: nb.query,
                    to,
                    affinity: subspace_affinity(a, b, normalization),
                }),
                _ => out.skipped_edges += 1,
            }
        }
    }
    Ok(out)
}

/// Affinity between the semantic-graph subspace of `item` and the subspace of
/// its anchor view (view 0) in the augmentation graph.
pub fn cross_affinity(
    aug: (&NNKGraph, &ViewSet),
    sem: (&NNKGraph, &ViewSet),
    item: usize,
    normalization: Normalization,
) -> Result<f64, MetricError> {
    let locate = |(graph, views): (&NNKGraph, &ViewSet), which| {
        let node = views
            .position_of((item, 0))
            .filter(|&n| n < graph.len())
            .ok_or(MetricError::ItemAbsent { item, which })?;
        neighbor_subspace(&graph.neighborhoods[node], views)
    };
    let a = locate(aug, "augmentation")?;
    let s = locate(sem, "semantic")?;
    Ok(subspace_affinity(&s, &a, normalization))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDistribution {
    pub metric: String,
    pub policies: Vec<Policy>,
    pub count: usize,
    pub mean: f64,
    pub spread: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
}

impl MetricDistribution {
    /// "Sem", "Augs", … or "Sem-Augs" for a cross term.
    pub fn policy_key(&self) -> String {
        policy_key(&self.policies)
    }
}

pub fn policy_key(policies: &[Policy]) -> String {
    policies.iter().map(Policy::as_str).collect::<Vec<_>>().join("-")
}

/// Mean and population standard deviation, summed in index order.
pub fn aggregate(
    values: Vec<f64>,
    metric: &str,
    policies: &[Policy],
) -> Result<MetricDistribution, MetricError> {
    if values.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(MetricDistribution {
        metric: metric.to_string(),
        policies: policies.to_vec(),
        count: values.len(),
        mean,
        spread: var.sqrt(),
        values,
    })
}

/// Feature names in output order: five policies times five statistics, then
/// the semantic/augmentation cross affinity and its spread (27 in total).
pub const FEATURE_NAMES: [&str; 27] = [
    "Sem/Equivariance",
    "Sem/Equivariance spread",
    "Sem/Affinity",
    "Sem/Affinity spread",
    "Sem/Nb. of neighbors",
    "Augs/Equivariance",
    "Augs/Equivariance spread",
    "Augs/Affinity",
    "Augs/Affinity spread",
    "Augs/Nb. of neighbors",
    "Crop/Equivariance",
    "Crop/Equivariance spread",
    "Crop/Affinity",
    "Crop/Affinity spread",
    "Crop/Nb. of neighbors",
    "Colorjit/Equivariance",
    "Colorjit/Equivariance spread",
    "Colorjit/Affinity",
    "Colorjit/Affinity spread",
    "Colorjit/Nb. of neighbors",
    "Rotate/Equivariance",
    "Rotate/Equivariance spread",
    "Rotate/Affinity",
    "Rotate/Affinity spread",
    "Rotate/Nb. of neighbors",
    "Sem-Augs/Affinity",
    "Sem-Augs/Affinity spread",
];

/// Flattens one model's distributions into the [`FEATURE_NAMES`] order.
pub fn feature_vector(
    distributions: &[MetricDistribution],
) -> Result<Vec<(String, f64)>, MetricError> {
    FEATURE_NAMES
        .iter()
        .map(|&name| {
            let (key, stat) = name.split_once('/').expect("feature names contain '/'");
            let (metric, spread) = match stat.strip_suffix(" spread") {
                Some(m) => (m, true),
                None => (stat, false),
            };
            let d = distributions
                .iter()
                .find(|d| d.metric == metric && d.policy_key() == key)
                .ok_or_else(|| MetricError::MissingFeature(format!("{key}/{metric}")))?;
            Ok((name.to_string(), if spread { d.spread } else { d.mean }))
        })
        .collect()
}
