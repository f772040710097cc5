//! LASSO by cyclic coordinate descent on `½‖y − Xβ‖²/M + λ‖β‖₁`.

use nalgebra::{DMatrix, DVector};

use super::{mean, FeatureMatrix, RegressionMethod, RegressionResult, StatsError};

const MAX_SWEEPS: usize = 100_000;
const TOLERANCE: f64 = 1e-9;

/// Ten log-spaced values from 1e-3 to 1.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..10).map(|i| 10f64.powf(-3.0 + 3.0 * i as f64 / 9.0)).collect()
}

pub fn lasso_objective(x: &DMatrix<f64>, y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let rows = x.nrows() as f64;
    let r = DVector::from_column_slice(y) - x * DVector::from_column_slice(beta);
    0.5 * r.norm_squared() / rows + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

fn check(m: &FeatureMatrix, target: &[f64], lambda: f64) -> Result<(), StatsError> {
    if !m.standardized {
        return Err(StatsError::NotStandardized);
    }
    if target.len() != m.n_models() {
        return Err(StatsError::DimensionMismatch(format!(
            "{} targets for {} models",
            target.len(),
            m.n_models()
        )));
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("target"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(StatsError::InvalidParameter(format!("lambda {lambda}")));
    }
    Ok(())
}

fn descend(
    x: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    beta: &mut [f64],
) -> Result<usize, StatsError> {
    let (rows, cols) = x.shape();
    let m = rows as f64;
    let col_sq: Vec<f64> = (0..cols).map(|j| x.column(j).norm_squared() / m).collect();
    let mut resid: Vec<f64> = (0..rows)
        .map(|i| y[i] - (0..cols).map(|j| x[(i, j)] * beta[j]).sum::<f64>())
        .collect();
    for sweep in 1..=MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for j in 0..cols {
            if col_sq[j] == 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let col = x.column(j);
            let rho = col.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / m
                + col_sq[j] * beta[j];
            let new = soft(rho, lambda) / col_sq[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(col.iter()) {
                    *r -= a * delta;
                }
                beta[j] = new;
            }
            max_change = max_change.max(delta.abs());
        }
        if max_change <= TOLERANCE {
            return Ok(sweep);
        }
    }
    Err(StatsError::NonConvergence { what: "LASSO coordinate descent", iterations: MAX_SWEEPS })
}

/// The target is centered internally; its mean is reported as the intercept.
pub fn lasso(m: &FeatureMatrix, target: &[f64], lambda: f64) -> Result<RegressionResult, StatsError> {
    check(m, target, lambda)?;
    let intercept = mean(target.iter().copied());
    let y: Vec<f64> = target.iter().map(|v| v - intercept).collect();
    let mut beta = vec![0.0; m.n_features()];
    let iterations = descend(&m.values, &y, lambda, &mut beta)?;
    Ok(RegressionResult {
        method: RegressionMethod::Lasso,
        feature_names: m.feature_names.clone(),
        values: beta,
        lambda: Some(lambda),
        max_depth: None,
        intercept,
        iterations,
    })
}

/// Solutions along `lambdas`, visited from largest to smallest with warm
/// starts; returned in the order given.
pub fn lasso_path(
    m: &FeatureMatrix,
    target: &[f64],
    lambdas: &[f64],
) -> Result<Vec<RegressionResult>, StatsError> {
    for &l in lambdas {
        check(m, target, l)?;
    }
    let intercept = mean(target.iter().copied());
    let y: Vec<f64> = target.iter().map(|v| v - intercept).collect();
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]).then(a.cmp(&b)));
    let mut beta = vec![0.0; m.n_features()];
    let mut out: Vec<Option<RegressionResult>> = vec![None; lambdas.len()];
    for idx in order {
        let iterations = descend(&m.values, &y, lambdas[idx], &mut beta)?;
        out[idx] = Some(RegressionResult {
            method: RegressionMethod::Lasso,
            feature_names: m.feature_names.clone(),
            values: beta.clone(),
            lambda: Some(lambdas[idx]),
            max_depth: None,
            intercept,
            iterations,
        });
    }
    Ok(out.into_iter().map(|r| r.expect("every lambda solved")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::standardize;

    fn planted() -> (FeatureMatrix, Vec<f64>) {
        let rows = 6;
        let data: Vec<f64> = (0..rows)
            .flat_map(|i| {
                let t = i as f64;
                [t, (t * 1.7).sin(), (t * t) % 5.0]
            })
            .collect();
        let m = standardize(
            &FeatureMatrix::new(
                (0..rows).map(|i| format!("m{i}")).collect(),
                vec!["a".into(), "b".into(), "c".into()],
                DMatrix::from_row_slice(rows, 3, &data),
            )
            .unwrap(),
        );
        let y: Vec<f64> = m.column(0).iter().map(|v| 2.0 * v).collect();
        (m, y)
    }

    #[test]
    fn zero_lambda_recovers_planted_coefficient() {
        let (m, y) = planted();
        let r = lasso(&m, &y, 0.0).unwrap();
        assert!((r.values[0] - 2.0).abs() < 1e-6);
        assert!(r.values[1].abs() < 1e-6 && r.values[2].abs() < 1e-6);
    }

    #[test]
    fn large_lambda_kills_everything() {
        let (m, y) = planted();
        let xty = m.values.transpose() * DVector::from_column_slice(&y);
        let lmax = xty.amax() / m.n_models() as f64;
        let r = lasso(&m, &y, lmax).unwrap();
        assert!(r.values.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn path_matches_cold_starts() {
        let (m, y) = planted();
        let grid = default_lambda_grid();
        assert_eq!(grid.len(), 10);
        assert!((grid[0] - 1e-3).abs() < 1e-15 && (grid[9] - 1.0).abs() < 1e-12);
        let path = lasso_path(&m, &y, &grid).unwrap();
        for (l, warm) in grid.iter().zip(&path) {
            let cold = lasso(&m, &y, *l).unwrap();
            for (a, b) in warm.values.iter().zip(&cold.values) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn requires_standardized_features() {
        let (m, y) = planted();
        let raw = FeatureMatrix { standardized: false, ..m };
        assert_eq!(lasso(&raw, &y, 0.1), Err(StatsError::NotStandardized));
    }
}
