//! Non-negative kernel regression (NNK) neighborhoods.
//!
//! For a query node the kNN candidates are re-weighted by solving
//!
//! ```text
//! min_{θ ≥ 0} ½ θᵀ (K_SS + εI) θ − θᵀ k_Sq
//! ```
//!
//! where `K_SS` is the cosine-kernel Gram matrix of the candidates and `k_Sq`
//! their kernel values to the query. Candidates that are explained by others
//! get a zero weight, so the surviving neighbors form a convex polytope
//! around the query instead of a ball.

pub mod qp;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::ViewSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnkError {
    #[error("vector {node} has zero norm")]
    DegenerateVector { node: usize },
    #[error("invalid kernel config: {0}")]
    InvalidConfig(String),
    #[error("view-set has {0} node(s); at least 2 are required")]
    TooFewNodes(usize),
    #[error("invalid candidate set: {0}")]
    InvalidCandidates(String),
    #[error("NNK solve for node {node} did not converge after {iterations} iterations (KKT residual {residual:e})")]
    Solver { node: usize, iterations: usize, residual: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    #[default]
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub kind: KernelKind,
    /// Clamp negative cosines to zero so the kernel stays in [0, 1].
    pub clamp_negative: bool,
    /// Added to the Gram diagonal; keeps duplicate points solvable.
    pub ridge: f64,
    /// Neighbors are the candidates whose weight exceeds this fraction of the
    /// largest weight.
    pub weight_threshold: f64,
    /// Candidate count; `None` means `min(T − 1, 50)`. Always capped at `T − 1`.
    pub k_init: Option<usize>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            kind: KernelKind::Cosine,
            clamp_negative: true,
            ridge: 1e-10,
            weight_threshold: 1e-6,
            k_init: None,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<(), NnkError> {
        if !(self.ridge > 0.0 && self.ridge.is_finite()) {
            return Err(NnkError::InvalidConfig(format!("ridge must be > 0, got {}", self.ridge)));
        }
        if !(self.weight_threshold > 0.0 && self.weight_threshold < 1.0) {
            return Err(NnkError::InvalidConfig(format!(
                "weight_threshold must lie in (0, 1), got {}",
                self.weight_threshold
            )));
        }
        if self.k_init == Some(0) {
            return Err(NnkError::InvalidConfig("k_init must be at least 1".into()));
        }
        Ok(())
    }

    /// Candidate count for a view-set of `nodes` members.
    pub fn effective_k(&self, nodes: usize) -> usize {
        let cap = nodes.saturating_sub(1);
        self.k_init.unwrap_or(50).min(cap)
    }

    fn clamp(&self, k: f64) -> f64 {
        let lo = if self.clamp_negative { 0.0 } else { -1.0 };
        k.clamp(lo, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub query: usize,
    /// kNN candidates in rank order.
    pub candidates: Vec<usize>,
    /// Kernel values query-to-candidate, aligned with `candidates`.
    pub kernel_row: Vec<f64>,
    /// Selected neighbors in ascending node order.
    pub neighbors: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// A query whose kernel value to every candidate is zero has no
    /// neighbors; metrics skip such nodes.
    pub fn is_isolated(&self) -> bool {
        self.neighbors.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NNKGraph {
    pub neighborhoods: Vec<Neighborhood>,
    pub config: KernelConfig,
}

impl NNKGraph {
    pub fn len(&self) -> usize {
        self.neighborhoods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighborhoods.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.neighborhoods.iter().map(Neighborhood::len).sum()
    }
}

pub(crate) fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| v.iter().map(|x| x / norm).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine_kernel(a: &[f64], b: &[f64], cfg: &KernelConfig) -> Result<f64, NnkError> {
    let ua = unit(a).ok_or(NnkError::DegenerateVector { node: 0 })?;
    let ub = unit(b).ok_or(NnkError::DegenerateVector { node: 1 })?;
    Ok(cfg.clamp(dot(&ua, &ub)))
}

fn unit_members(views: &ViewSet) -> Result<Vec<Vec<f64>>, NnkError> {
    views
        .members
        .iter()
        .enumerate()
        .map(|(node, v)| unit(v).ok_or(NnkError::DegenerateVector { node }))
        .collect()
}

fn gram(units: &[Vec<f64>], cfg: &KernelConfig) -> DMatrix<f64> {
    let n = units.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        g[(i, i)] = cfg.clamp(dot(&units[i], &units[i]));
        for j in i + 1..n {
            let k = cfg.clamp(dot(&units[i], &units[j]));
            g[(i, j)] = k;
            g[(j, i)] = k;
        }
    }
    g
}

/// Indices of the `k` largest values of `row`, skipping `q`; ties go to the
/// lower index.
fn rank_candidates(row: impl Fn(usize) -> f64, n: usize, q: usize, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).filter(|&j| j != q).collect();
    order.sort_by(|&a, &b| row(b).total_cmp(&row(a)).then(a.cmp(&b)));
    order.truncate(k);
    order
}

pub fn knn_candidates(
    q: usize,
    views: &ViewSet,
    cfg: &KernelConfig,
) -> Result<Vec<usize>, NnkError> {
    let n = views.len();
    if n < 2 {
        return Err(NnkError::TooFewNodes(n));
    }
    let units = unit_members(views)?;
    let row: Vec<f64> = units.iter().map(|u| cfg.clamp(dot(&units[q], u))).collect();
    Ok(rank_candidates(|j| row[j], n, q, cfg.effective_k(n)))
}

fn solve_from_gram(
    q: usize,
    candidates: &[usize],
    gram: &DMatrix<f64>,
    cfg: &KernelConfig,
) -> Result<Neighborhood, NnkError> {
    let s = candidates.len();
    let h = DMatrix::from_fn(s, s, |r, c| {
        gram[(candidates[r], candidates[c])] + if r == c { cfg.ridge } else { 0.0 }
    });
    let kernel_row: Vec<f64> = candidates.iter().map(|&c| gram[(q, c)]).collect();
    let b = DVector::from_column_slice(&kernel_row);
    let sol = qp::solve_nonnegative_qp(&h, &b, 10 * s).map_err(|f| NnkError::Solver {
        node: q,
        iterations: f.iterations,
        residual: f.kkt_residual,
    })?;

    let max_w = sol.x.iter().copied().fold(0.0, f64::max);
    let mut selected: Vec<(usize, f64)> = candidates
        .iter()
        .zip(&sol.x)
        .filter(|&(_, &w)| max_w > 0.0 && w > cfg.weight_threshold * max_w)
        .map(|(&c, &w)| (c, w))
        .collect();
    selected.sort_by_key(|&(c, _)| c);
    let (neighbors, weights) = selected.into_iter().unzip();
    Ok(Neighborhood { query: q, candidates: candidates.to_vec(), kernel_row, neighbors, weights })
}

pub fn nnk_solve(
    q: usize,
    candidates: &[usize],
    views: &ViewSet,
    cfg: &KernelConfig,
) -> Result<Neighborhood, NnkError> {
    cfg.validate()?;
    if candidates.is_empty() {
        return Err(NnkError::InvalidCandidates("empty".into()));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != candidates.len() {
        return Err(NnkError::InvalidCandidates("duplicate indices".into()));
    }
    if sorted.contains(&q) {
        return Err(NnkError::InvalidCandidates(format!("query {q} among candidates")));
    }
    if let Some(&bad) = sorted.iter().find(|&&c| c >= views.len()) {
        return Err(NnkError::InvalidCandidates(format!("index {bad} out of range")));
    }
    // Local Gram over the query and its candidates.
    let nodes: Vec<usize> = std::iter::once(q).chain(candidates.iter().copied()).collect();
    let units = nodes
        .iter()
        .map(|&i| unit(&views.members[i]).ok_or(NnkError::DegenerateVector { node: i }))
        .collect::<Result<Vec<_>, _>>()?;
    let local = gram(&units, cfg);
    let local_candidates: Vec<usize> = (1..nodes.len()).collect();
    let nb = solve_from_gram(0, &local_candidates, &local, cfg)
        .map_err(|e| match e {
            NnkError::Solver { iterations, residual, .. } => {
                NnkError::Solver { node: q, iterations, residual }
            }
            other => other,
        })?;
    let mut selected: Vec<(usize, f64)> =
        nb.neighbors.iter().map(|&l| nodes[l]).zip(nb.weights).collect();
    selected.sort_by_key(|&(c, _)| c);
    let (neighbors, weights) = selected.into_iter().unzip();
    Ok(Neighborhood {
        query: q,
        candidates: candidates.to_vec(),
        kernel_row: nb.kernel_row,
        neighbors,
        weights,
    })
}

/// NNK neighborhood of every node of `views`. Nodes are solved in parallel on
/// the current rayon pool; results are collected in node order.
pub fn build_graph(views: &ViewSet, cfg: &KernelConfig) -> Result<NNKGraph, NnkError> {
    cfg.validate()?;
    let n = views.len();
    if n < 2 {
        return Err(NnkError::TooFewNodes(n));
    }
    let units = unit_members(views)?;
    let g = gram(&units, cfg);
    let k = cfg.effective_k(n);
    let neighborhoods = (0..n)
        .into_par_iter()
        .map(|q| {
            let candidates = rank_candidates(|j| g[(q, j)], n, q, k);
            solve_from_gram(q, &candidates, &g, cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(NNKGraph { neighborhoods, config: cfg.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> KernelConfig {
        KernelConfig::default()
    }

    fn circle(deg: f64) -> Vec<f64> {
        let r = deg.to_radians();
        vec![r.cos(), r.sin()]
    }

    #[test]
    fn cosine_examples() {
        let c = cfg();
        assert_eq!(cosine_kernel(&[1.0, 0.0], &[0.0, 1.0], &c).unwrap(), 0.0);
        assert!((cosine_kernel(&[2.0, 2.0], &[1.0, 1.0], &c).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_kernel(&[3.0, 4.0], &[4.0, 3.0], &c).unwrap() - 0.96).abs() < 1e-15);
        assert_eq!(cosine_kernel(&[1.0, 0.0], &[-1.0, 0.0], &c).unwrap(), 0.0);
        let raw = KernelConfig { clamp_negative: false, ..cfg() };
        assert!((cosine_kernel(&[1.0, 0.0], &[-1.0, 0.0], &raw).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(
            cosine_kernel(&[0.0, 0.0], &[1.0, 0.0], &c),
            Err(NnkError::DegenerateVector { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(KernelConfig { ridge: 0.0, ..cfg() }.validate().is_err());
        assert!(KernelConfig { weight_threshold: 1.0, ..cfg() }.validate().is_err());
        assert!(KernelConfig { k_init: Some(0), ..cfg() }.validate().is_err());
        assert_eq!(cfg().effective_k(50), 49);
        assert_eq!(cfg().effective_k(200), 50);
        assert_eq!(KernelConfig { k_init: Some(3), ..cfg() }.effective_k(50), 3);
    }

    #[test]
    fn knn_examples() {
        // query at 0 deg, kernels 0.9 and 0.5 to the others
        let views = ViewSet::from_vectors(vec![
            vec![1.0, 0.0],
            vec![0.5, (1.0f64 - 0.25).sqrt()],
            vec![0.9, (1.0f64 - 0.81).sqrt()],
        ]);
        let one = KernelConfig { k_init: Some(1), ..cfg() };
        assert_eq!(knn_candidates(0, &views, &one).unwrap(), vec![2]);

        let equal = ViewSet::from_vectors(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]]);
        assert_eq!(knn_candidates(0, &equal, &one).unwrap(), vec![1]);

        assert_eq!(knn_candidates(1, &equal, &cfg()).unwrap().len(), 2);
        let mut all = knn_candidates(1, &equal, &cfg()).unwrap();
        all.sort();
        assert_eq!(all, vec![0, 2]);
    }

    #[test]
    fn single_candidate_closed_form() {
        let views = ViewSet::from_vectors(vec![vec![1.0, 0.0], vec![0.6, 0.8]]);
        let nb = nnk_solve(0, &[1], &views, &cfg()).unwrap();
        assert_eq!(nb.neighbors, vec![1]);
        let expected = 0.6 / (1.0 + 1e-10);
        assert!((nb.weights[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn redundant_candidate_pruned() {
        let views = ViewSet::from_vectors(vec![circle(0.0), circle(10.0), circle(20.0)]);
        let nb = nnk_solve(0, &[1, 2], &views, &cfg()).unwrap();
        assert_eq!(nb.neighbors, vec![1]);
    }

    #[test]
    fn query_copy_takes_all_weight() {
        let views = ViewSet::from_vectors(vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        let nb = nnk_solve(0, &[1, 2], &views, &cfg()).unwrap();
        assert_eq!(nb.neighbors, vec![1]);
        assert!((nb.weights[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bad_candidates() {
        let views = ViewSet::from_vectors(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(nnk_solve(0, &[], &views, &cfg()).is_err());
        assert!(nnk_solve(0, &[0], &views, &cfg()).is_err());
        assert!(nnk_solve(0, &[1, 1], &views, &cfg()).is_err());
    }

    #[test]
    fn two_nodes_are_mutual_neighbors() {
        let views = ViewSet::from_vectors(vec![vec![1.0, 0.2], vec![0.3, 1.0]]);
        let g = build_graph(&views, &cfg()).unwrap();
        assert_eq!(g.neighborhoods[0].neighbors, vec![1]);
        assert_eq!(g.neighborhoods[1].neighbors, vec![0]);
    }

    #[test]
    fn identical_vectors_stay_solvable() {
        let views = ViewSet::from_vectors(vec![vec![0.3, 0.1, 2.0]; 50]);
        let g = build_graph(&views, &cfg()).unwrap();
        assert_eq!(g.len(), 50);
        for nb in &g.neighborhoods {
            assert!(!nb.neighbors.is_empty());
            assert!(!nb.neighbors.contains(&nb.query));
        }
    }

    #[test]
    fn orthogonal_query_is_isolated() {
        let views = ViewSet::from_vectors(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 1.0]]);
        let g = build_graph(&views, &cfg()).unwrap();
        assert!(g.neighborhoods[0].is_isolated());
        assert_eq!(g.neighborhoods[1].neighbors, vec![2]);
    }

    #[test]
    fn too_few_nodes() {
        let views = ViewSet::from_vectors(vec![vec![1.0]]);
        assert_eq!(build_graph(&views, &cfg()), Err(NnkError::TooFewNodes(1)));
    }

    #[test]
    fn zero_vector_reports_node() {
        let views = ViewSet::from_vectors(vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(build_graph(&views, &cfg()), Err(NnkError::DegenerateVector { node: 1 }));
    }

    #[test]
    fn qp_single_coordinate() {
        let h = DMatrix::from_row_slice(1, 1, &[2.0]);
        let b = DVector::from_column_slice(&[3.0]);
        let sol = qp::solve_nonnegative_qp(&h, &b, 10).unwrap();
        assert!((sol.x[0] - 1.5).abs() < 1e-15);
        let neg = DVector::from_column_slice(&[-3.0]);
        assert_eq!(qp::solve_nonnegative_qp(&h, &neg, 10).unwrap().x, vec![0.0]);
    }

    #[test]
    fn qp_iteration_cap_reports_failure() {
        let h = DMatrix::<f64>::identity(3, 3);
        let b = DVector::from_column_slice(&[1.0, 1.0, 1.0]);
        let err = qp::solve_nonnegative_qp(&h, &b, 1).unwrap_err();
        assert_eq!(err.iterations, 1);
        assert!(err.kkt_residual > 0.5);
    }
}
