//! Complete-linkage agglomerative clustering.
//!
//! Leaves are numbered `0..n`; the cluster created by step `s` gets id
//! `n + s`, as in SciPy's linkage matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, StatsError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub steps: Vec<MergeStep>,
}

impl Dendrogram {
    /// Flat cluster label per leaf after undoing the last `k − 1` merges.
    /// Labels are numbered by first appearance in leaf order.
    pub fn cut(&self, k: usize) -> Vec<usize> {
        let n = self.n_leaves;
        let k = k.clamp(1, n);
        let mut parent: Vec<usize> = (0..2 * n).collect();
        fn find(parent: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while parent[r] != r {
                r = parent[r];
            }
            parent[x] = r;
            r
        }
        for (s, step) in self.steps.iter().take(n - k).enumerate() {
            let id = n + s;
            let ra = find(&mut parent, step.a);
            let rb = find(&mut parent, step.b);
            parent[ra] = id;
            parent[rb] = id;
        }
        let mut labels = vec![usize::MAX; n];
        let mut roots: Vec<usize> = Vec::new();
        for (leaf, label) in labels.iter_mut().enumerate() {
            let r = find(&mut parent, leaf);
            *label = match roots.iter().position(|&x| x == r) {
                Some(p) => p,
                None => {
                    roots.push(r);
                    roots.len() - 1
                }
            };
        }
        labels
    }

    /// Leaves in dendrogram drawing order.
    pub fn leaf_order(&self) -> Vec<usize> {
        let n = self.n_leaves;
        if self.steps.is_empty() {
            return (0..n).collect();
        }
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![n + self.steps.len() - 1];
        while let Some(id) = stack.pop() {
            if id < n {
                order.push(id);
            } else {
                let s = self.steps[id - n];
                stack.push(s.b);
                stack.push(s.a);
            }
        }
        order
    }
}

fn validate(dist: &DMatrix<f64>) -> Result<(), StatsError> {
    let n = dist.nrows();
    if dist.ncols() != n {
        return Err(StatsError::InvalidDistance(format!("{}x{} is not square", n, dist.ncols())));
    }
    if n < 2 {
        return Err(StatsError::TooFewRows { needed: 2, got: n });
    }
    for i in 0..n {
        if dist[(i, i)] != 0.0 {
            return Err(StatsError::InvalidDistance(format!("diagonal entry {i} is non-zero")));
        }
        for j in 0..n {
            let d = dist[(i, j)];
            if !d.is_finite() || d < 0.0 {
                return Err(StatsError::InvalidDistance(format!("entry ({i}, {j}) = {d}")));
            }
            if d != dist[(j, i)] {
                return Err(StatsError::InvalidDistance(format!("asymmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Merges the closest pair of clusters until one remains, where the distance
/// between clusters is their largest pairwise member distance. Ties go to
/// the pair with the smallest `(a, b)` ids.
pub fn complete_linkage(dist: &DMatrix<f64>) -> Result<Dendrogram, StatsError> {
    validate(dist)?;
    let n = dist.nrows();
    let total = 2 * n - 1;
    let mut d = DMatrix::from_element(total, total, f64::NAN);
    d.view_mut((0, 0), (n, n)).copy_from(dist);
    let mut active: Vec<usize> = (0..n).collect();
    let mut sizes = vec![1usize; total];
    let mut steps = Vec::with_capacity(n - 1);

    for s in 0..n - 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for (x, &a) in active.iter().enumerate() {
            for &b in &active[x + 1..] {
                let h = d[(a, b)];
                if best.is_none_or(|(_, _, bh)| h < bh) {
                    best = Some((a, b, h));
                }
            }
        }
        let (a, b, height) = best.expect("at least two active clusters");
        let id = n + s;
        active.retain(|&c| c != a && c != b);
        for &c in &active {
            let h = d[(a, c)].max(d[(b, c)]);
            d[(id, c)] = h;
            d[(c, id)] = h;
        }
        d[(id, id)] = 0.0;
        active.push(id);
        sizes[id] = sizes[a] + sizes[b];
        steps.push(MergeStep { a, b, height, size: sizes[id] });
    }
    Ok(Dendrogram { n_leaves: n, steps })
}

/// Pairwise Euclidean distances between model rows.
pub fn euclidean_distances(m: &FeatureMatrix) -> DMatrix<f64> {
    let n = m.n_models();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            let (lo, hi) = (i.min(j), i.max(j));
            (m.values.row(lo) - m.values.row(hi)).norm()
        }
    })
}
