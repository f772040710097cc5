//! Model-level analyses over per-model feature vectors.

mod lasso;
mod linkage;
mod pearson;
mod spca;
mod tree;

pub use lasso::{default_lambda_grid, lasso, lasso_objective, lasso_path};
pub use linkage::{complete_linkage, euclidean_distances, Dendrogram, MergeStep};
pub use pearson::{pearson, Correlation, CorrelationResult};
pub use spca::{sparse_pca, SparsePca};
pub use tree::{tree_regression, RegressionTree, TreeNode};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("length mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },
    #[error("invalid distance matrix: {0}")]
    InvalidDistance(String),
    #[error("correlation undefined: {0} is constant")]
    ConstantInput(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("features must be standardized first")]
    NotStandardized,
}

/// Models (rows) by features (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub model_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub values: DMatrix<f64>,
    pub standardized: bool,
    /// Columns with zero spread; zeroed by [`standardize`].
    pub constant_columns: Vec<bool>,
}

impl FeatureMatrix {
    pub fn new(
        model_ids: Vec<String>,
        feature_names: Vec<String>,
        values: DMatrix<f64>,
    ) -> Result<Self, StatsError> {
        if values.nrows() != model_ids.len() || values.ncols() != feature_names.len() {
            return Err(StatsError::DimensionMismatch(format!(
                "{}x{} values for {} models and {} features",
                values.nrows(),
                values.ncols(),
                model_ids.len(),
                feature_names.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite("feature matrix"));
        }
        let constant_columns = vec![false; values.ncols()];
        Ok(Self { model_ids, feature_names, values, standardized: false, constant_columns })
    }

    pub fn n_models(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressionMethod {
    Lasso,
    Tree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub method: RegressionMethod,
    pub feature_names: Vec<String>,
    /// LASSO coefficients or normalized tree importances, one per feature.
    pub values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    pub intercept: f64,
    pub iterations: usize,
}

pub(crate) fn mean(v: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = v.len() as f64;
    v.sum::<f64>() / n
}

/// Column-wise z-scores with the population standard deviation. Constant
/// columns become zeros and are flagged.
pub fn standardize(m: &FeatureMatrix) -> FeatureMatrix {
    let rows = m.n_models();
    let mut values = m.values.clone();
    let mut constant_columns = vec![false; m.n_features()];
    for (j, flag) in constant_columns.iter_mut().enumerate() {
        let col = m.values.column(j);
        let mu = mean(col.iter().copied());
        let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / rows as f64;
        let sd = var.sqrt();
        let scale = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if sd <= 1e-12 * scale.max(f64::MIN_POSITIVE) || sd == 0.0 {
            *flag = true;
            values.column_mut(j).fill(0.0);
        } else {
            for i in 0..rows {
                values[(i, j)] = (m.values[(i, j)] - mu) / sd;
            }
        }
    }
    FeatureMatrix {
        model_ids: m.model_ids.clone(),
        feature_names: m.feature_names.clone(),
        values,
        standardized: true,
        constant_columns,
    }
}
