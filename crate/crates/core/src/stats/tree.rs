//! CART regression tree with variance-reduction splits.

use serde::{Deserialize, Serialize};

use super::{mean, FeatureMatrix, RegressionMethod, RegressionResult, StatsError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf { value: f64, samples: usize },
    Split { feature: usize, threshold: f64, gain: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// Node 0 is the root.
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { value, .. } => return value,
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    at = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

fn sse(ys: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, s) = ys.clone().fold((0usize, 0.0), |(n, s), y| (n + 1, s + y));
    let mu = s / n as f64;
    ys.map(|y| (y - mu) * (y - mu)).sum()
}

const TIE_TOLERANCE: f64 = 1e-12;

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Exhaustive scan over midpoints of sorted unique values; the first strict
/// improvement wins, so ties keep the lowest feature and threshold. Gains
/// within `TIE_TOLERANCE * parent_sse` count as ties, since the same
/// partition reached through a different sort order differs by rounding.
fn best_split(x: &[Vec<f64>], y: &[f64], idx: &[usize], parent_sse: f64) -> Option<Best> {
    let n_features = x.first().map_or(0, Vec::len);
    let center = mean(idx.iter().map(|&i| y[i]));
    let mut best: Option<Best> = None;
    for f in 0..n_features {
        let mut order = idx.to_vec();
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let total: f64 = order.iter().map(|&i| y[i] - center).sum();
        let total_sq: f64 = order.iter().map(|&i| (y[i] - center).powi(2)).sum();
        let (mut s, mut sq) = (0.0, 0.0);
        for k in 0..order.len() - 1 {
            let v = y[order[k]] - center;
            s += v;
            sq += v * v;
            let (lo, hi) = (x[order[k]][f], x[order[k + 1]][f]);
            if lo == hi {
                continue;
            }
            let nl = (k + 1) as f64;
            let nr = (order.len() - k - 1) as f64;
            let left = (sq - s * s / nl).max(0.0);
            let right = ((total_sq - sq) - (total - s).powi(2) / nr).max(0.0);
            let gain = parent_sse - left - right;
            let margin = TIE_TOLERANCE * parent_sse;
            if gain > margin && best.as_ref().is_none_or(|b| gain > b.gain + margin) {
                best = Some(Best { feature: f, threshold: lo + (hi - lo) / 2.0, gain });
            }
        }
    }
    best
}

fn grow(
    x: &[Vec<f64>],
    y: &[f64],
    idx: Vec<usize>,
    depth: usize,
    max_depth: usize,
    nodes: &mut Vec<TreeNode>,
    importance: &mut [f64],
) -> usize {
    let at = nodes.len();
    let value = mean(idx.iter().map(|&i| y[i]));
    nodes.push(TreeNode::Leaf { value, samples: idx.len() });
    if depth >= max_depth || idx.len() < 2 {
        return at;
    }
    let parent_sse = sse(idx.iter().map(|&i| y[i]));
    if parent_sse <= 0.0 {
        return at;
    }
    let Some(best) = best_split(x, y, &idx, parent_sse) else { return at };
    let (l, r): (Vec<usize>, Vec<usize>) =
        idx.iter().partition(|&&i| x[i][best.feature] <= best.threshold);
    importance[best.feature] += best.gain;
    let left = grow(x, y, l, depth + 1, max_depth, nodes, importance);
    let right = grow(x, y, r, depth + 1, max_depth, nodes, importance);
    nodes[at] =
        TreeNode::Split { feature: best.feature, threshold: best.threshold, gain: best.gain, left, right };
    at
}

/// Fits a depth-limited regression tree. Importances are the total squared
/// error reduction per feature, normalized to sum to one (all zero when no
/// split happens).
pub fn tree_regression(
    m: &FeatureMatrix,
    target: &[f64],
    max_depth: usize,
) -> Result<(RegressionResult, RegressionTree), StatsError> {
    let rows = m.n_models();
    if rows < 2 {
        return Err(StatsError::TooFewRows { needed: 2, got: rows });
    }
    if target.len() != rows {
        return Err(StatsError::DimensionMismatch(format!("{} targets for {rows} models", target.len())));
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("target"));
    }
    let x: Vec<Vec<f64>> = (0..rows).map(|i| m.values.row(i).iter().copied().collect()).collect();
    let mut nodes = Vec::new();
    let mut importance = vec![0.0; m.n_features()];
    grow(&x, target, (0..rows).collect(), 0, max_depth, &mut nodes, &mut importance);
    let total: f64 = importance.iter().sum();
    if total > 0.0 {
        importance.iter_mut().for_each(|v| *v /= total);
    }
    let splits = nodes.iter().filter(|n| matches!(n, TreeNode::Split { .. })).count();
    Ok((
        RegressionResult {
            method: RegressionMethod::Tree,
            feature_names: m.feature_names.clone(),
            values: importance,
            lambda: None,
            max_depth: Some(max_depth),
            intercept: mean(target.iter().copied()),
            iterations: splits,
        },
        RegressionTree { nodes },
    ))
}
