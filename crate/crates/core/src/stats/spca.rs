//! Sparse PCA by a soft-thresholded power method with projection deflation.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{FeatureMatrix, StatsError};

const MAX_ITERATIONS: usize = 10_000;
const TOLERANCE: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SparsePca {
    /// Features by components, each column unit norm.
    #[serde(skip)]
    pub loadings: DMatrix<f64>,
    /// Models by components.
    #[serde(skip)]
    pub projections: DMatrix<f64>,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub penalty: f64,
    pub iterations: Vec<usize>,
}

fn soft_threshold(u: &mut DVector<f64>, penalty: f64) {
    let t = penalty * u.amax();
    u.apply(|v| *v = v.signum() * (v.abs() - t).max(0.0));
}

/// `penalty` is relative: each power step shrinks the entries by
/// `penalty * max|entry|`, so it must lie in `[0, 1)`.
pub fn sparse_pca(
    m: &FeatureMatrix,
    n_components: usize,
    penalty: f64,
) -> Result<SparsePca, StatsError> {
    if !m.standardized {
        return Err(StatsError::NotStandardized);
    }
    if !(0.0..1.0).contains(&penalty) {
        return Err(StatsError::InvalidParameter(format!("penalty {penalty} outside [0, 1)")));
    }
    let f = m.n_features();
    if n_components == 0 || n_components > f {
        return Err(StatsError::InvalidParameter(format!(
            "{n_components} components for {f} features"
        )));
    }
    let rows = m.n_models() as f64;
    let x = &m.values;
    let cov = x.transpose() * x / rows;
    let total = cov.trace();
    let mut work = cov.clone();
    let mut loadings = DMatrix::zeros(f, n_components);
    let mut iterations = Vec::with_capacity(n_components);

    for c in 0..n_components {
        let scale = total.abs().max(f64::MIN_POSITIVE);
        // Start from the column with the largest norm.
        let start = (0..f)
            .max_by(|&a, &b| work.column(a).norm().total_cmp(&work.column(b).norm()).then(b.cmp(&a)))
            .unwrap();
        let mut v: DVector<f64> = work.column(start).into_owned();
        let mut its = 0;
        if v.norm() <= 1e-14 * scale {
            // Remaining variance is zero: any direction orthogonal to the
            // previous loadings will do.
            v = orthogonal_fill(&loadings, c);
        } else {
            v /= v.norm();
            loop {
                its += 1;
                if its > MAX_ITERATIONS {
                    return Err(StatsError::NonConvergence {
                        what: "sparse PCA power iteration",
                        iterations: MAX_ITERATIONS,
                    });
                }
                let mut u = &work * &v;
                soft_threshold(&mut u, penalty);
                let norm = u.norm();
                if norm <= 1e-14 * scale {
                    break;
                }
                u /= norm;
                let change = (&u - &v).norm();
                v = u;
                if change < TOLERANCE {
                    break;
                }
            }
        }
        let lead = v.iamax();
        if v[lead] < 0.0 {
            v = -v;
        }
        loadings.set_column(c, &v);
        let proj = DMatrix::identity(f, f) - &v * v.transpose();
        work = &proj * work * &proj;
        iterations.push(its);
    }

    let projections = x * &loadings;
    let explained_variance: Vec<f64> = (0..n_components)
        .map(|c| {
            let v = loadings.column(c);
            (v.transpose() * &cov * v)[(0, 0)]
        })
        .collect();
    let explained_variance_ratio = explained_variance
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();
    Ok(SparsePca {
        loadings,
        projections,
        explained_variance,
        explained_variance_ratio,
        penalty,
        iterations,
    })
}

fn orthogonal_fill(loadings: &DMatrix<f64>, filled: usize) -> DVector<f64> {
    let f = loadings.nrows();
    for e in 0..f {
        let mut v = DVector::zeros(f);
        v[e] = 1.0;
        for k in 0..filled {
            let l = loadings.column(k);
            v -= l * l.dot(&v);
        }
        if v.norm() > 1e-8 {
            return v.normalize();
        }
    }
    unreachable!("fewer components than features")
}
