mod common;

use mgm_core::stats::*;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;

fn matrix(rows: usize, cols: usize, seed: u64) -> FeatureMatrix {
    let mut rng = common::rng(seed);
    let values = DMatrix::from_fn(rows, cols, |_, _| common::gaussian(&mut rng));
    FeatureMatrix::new(
        (0..rows).map(|i| format!("model{i}")).collect(),
        (0..cols).map(|j| format!("f{j}")).collect(),
        values,
    )
    .unwrap()
}

#[test]
fn linkage_matches_brute_force() {
    let mut rng = common::rng(11);
    for case in 0..200 {
        let m = 2 + case % 11;
        let d = common::random_distances(&mut rng, m);
        let fast = complete_linkage(&d).unwrap();
        let slow = common::brute_force_linkage(&d);
        let got: Vec<_> = fast.steps.iter().map(|s| (s.a, s.b, s.height, s.size)).collect();
        assert_eq!(got, slow, "case {case}");
    }
}

#[test]
fn linkage_hand_trace() {
    let d = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 3.0, 2.0, 3.0, 0.0]);
    let steps = complete_linkage(&d).unwrap().steps;
    assert_eq!((steps[0].a, steps[0].b, steps[0].height), (0, 1, 1.0));
    assert_eq!((steps[1].a, steps[1].b, steps[1].height), (2, 3, 3.0));
}

#[test]
fn p_value_matches_numerical_t_tail() {
    let (r, n) = (0.66f64, 14usize);
    // data with exactly this correlation: y = r x + sqrt(1 - r²) z, z ⟂ x
    let x: Vec<f64> = (0..n).map(|i| i as f64 - 6.5).collect();
    let mut z: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
    let zm = z.iter().sum::<f64>() / n as f64;
    z.iter_mut().for_each(|v| *v -= zm);
    let proj = z.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / x.iter().map(|v| v * v).sum::<f64>();
    z.iter_mut().zip(&x).for_each(|(v, xi)| *v -= proj * xi);
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let y: Vec<f64> =
        x.iter().zip(&z).map(|(a, b)| r * a / nx + (1.0 - r * r).sqrt() * b / nz).collect();
    let c = pearson(&x, &y).unwrap();
    assert!((c.pearson_r - r).abs() < 1e-12);
    let t = r * ((n as f64 - 2.0) / (1.0 - r * r)).sqrt();
    let oracle = common::t_two_sided_numeric(t, n as f64 - 2.0);
    assert!((c.p_value - oracle).abs() < 1e-3, "{} vs {oracle}", c.p_value);
    assert!((c.p_value - 0.0102).abs() < 5e-4);
}

#[test]
fn lasso_without_penalty_is_least_squares() {
    let m = standardize(&matrix(30, 4, 2));
    let beta_true = [2.0, -1.0, 0.5, 0.0];
    let y: Vec<f64> = (0..30)
        .map(|i| 3.0 + (0..4).map(|j| beta_true[j] * m.values[(i, j)]).sum::<f64>())
        .collect();
    let fit = lasso(&m, &y, 0.0).unwrap();
    let ols = common::ols(&m.values, &y);
    for (a, b) in fit.values.iter().zip(&ols) {
        assert!((a - b).abs() < 1e-6);
    }
    for (a, b) in fit.values.iter().zip(beta_true) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn lasso_beats_random_perturbations() {
    let m = standardize(&matrix(14, 27, 5));
    let mut rng = common::rng(6);
    let y: Vec<f64> = (0..14).map(|_| common::gaussian(&mut rng)).collect();
    let ym = y.iter().sum::<f64>() / 14.0;
    let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
    let fit = lasso(&m, &yc, 0.1).unwrap();
    let best = lasso_objective(&m.values, &yc, &fit.values, 0.1);
    for _ in 0..1000 {
        let scale = 10f64.powf(rng.random_range(-4.0..0.0));
        let beta: Vec<f64> =
            fit.values.iter().map(|b| b + scale * common::gaussian(&mut rng)).collect();
        assert!(best <= lasso_objective(&m.values, &yc, &beta, 0.1) + 1e-12);
    }
}

#[test]
fn lasso_large_penalty_zeroes_everything() {
    let m = standardize(&matrix(10, 5, 8));
    let y: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
    let ym = y.iter().sum::<f64>() / 10.0;
    let xty = (0..5)
        .map(|j| (0..10).map(|i| m.values[(i, j)] * (y[i] - ym)).sum::<f64>().abs() / 10.0)
        .fold(0.0, f64::max);
    assert!(lasso(&m, &y, xty).unwrap().values.iter().all(|b| *b == 0.0));
}

#[test]
fn tree_isolates_planted_step() {
    let mut m = matrix(16, 6, 9);
    for i in 0..16 {
        m.values[(i, 3)] = i as f64;
    }
    let y: Vec<f64> = (0..16).map(|i| if i < 7 { 1.0 } else { 4.0 }).collect();
    let (r, _) = tree_regression(&m, &y, 5).unwrap();
    assert_eq!(r.values[3], 1.0);
    assert!(r.values.iter().enumerate().all(|(j, v)| j == 3 || *v == 0.0));
}

#[test]
fn sparse_pca_without_penalty_matches_eigendecomposition() {
    let m = standardize(&matrix(14, 27, 12));
    let p = sparse_pca(&m, 2, 0.0).unwrap();
    let cov = m.values.transpose() * &m.values / 14.0;
    let eig = SymmetricEigen::new(cov.clone());
    let mut vals: Vec<(f64, usize)> = eig.eigenvalues.iter().copied().zip(0..).collect();
    vals.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total = cov.trace();
    let share = (vals[0].0 + vals[1].0) / total;
    let got: f64 = p.explained_variance_ratio.iter().sum();
    assert!((got - share).abs() < 1e-6, "{got} vs {share}");
    // principal angles between the two 2-D subspaces
    let top = DMatrix::from_columns(&[eig.eigenvectors.column(vals[0].1), eig.eigenvectors.column(vals[1].1)]);
    let cos = (top.transpose() * &p.loadings).singular_values();
    assert!(cos.iter().all(|c| (c - 1.0).abs() < 1e-6), "{cos}");
    let dot = p.loadings.column(0).dot(&p.loadings.column(1));
    assert!(dot.abs() < 1e-8);
}

#[test]
fn tree_never_worse_than_root() {
    for seed in 0..20 {
        let m = matrix(12, 5, 100 + seed);
        let mut rng = common::rng(seed);
        let y: Vec<f64> = (0..12).map(|_| common::gaussian(&mut rng)).collect();
        let (_, tree) = tree_regression(&m, &y, 3).unwrap();
        let mean = y.iter().sum::<f64>() / 12.0;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 12.0;
        let mse = (0..12)
            .map(|i| {
                let row: Vec<f64> = m.values.row(i).iter().copied().collect();
                (tree.predict(&row) - y[i]).powi(2)
            })
            .sum::<f64>()
            / 12.0;
        assert!(mse <= var + 1e-12);
    }
}

fn sample(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-100.0f64..100.0, n)
}

proptest! {
    #[test]
    fn pearson_symmetric_and_affine_invariant(
        (x, y) in (3usize..20).prop_flat_map(|n| (sample(n), sample(n))),
        a in 0.1f64..10.0,
        b in -50.0f64..50.0,
    ) {
        let Ok(c) = pearson(&x, &y) else { return Ok(()) };
        prop_assert_eq!(c.pearson_r, pearson(&y, &x).unwrap().pearson_r);
        let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        prop_assert!((pearson(&xs, &y).unwrap().pearson_r - c.pearson_r).abs() < 1e-12);
    }

    #[test]
    fn lasso_path_shrinks(seed in 0u64..1000) {
        let m = standardize(&matrix(10, 6, seed));
        let mut rng = common::rng(seed ^ 0xabc);
        let y: Vec<f64> = (0..10).map(|_| common::gaussian(&mut rng)).collect();
        let grid = default_lambda_grid();
        let path = lasso_path(&m, &y, &grid).unwrap();
        let l1 = |r: &RegressionResult| r.values.iter().map(|v| v.abs()).sum::<f64>();
        for w in grid.windows(2).zip(path.windows(2)) {
            let ((l_a, l_b), (r_a, r_b)) = ((w.0[0], w.0[1]), (&w.1[0], &w.1[1]));
            if l_b > l_a {
                prop_assert!(l1(r_b) <= l1(r_a) + 1e-9);
            } else {
                prop_assert!(l1(r_a) <= l1(r_b) + 1e-9);
            }
        }
    }

    #[test]
    fn standardize_is_idempotent(seed in 0u64..1000) {
        let once = standardize(&matrix(6, 4, seed));
        let twice = standardize(&once);
        prop_assert!((&once.values - &twice.values).amax() < 1e-10);
    }
}
