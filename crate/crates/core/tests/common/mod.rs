//! Independent reference implementations used by the integration tests and
//! the acceptance suite.
#![allow(dead_code)]

use std::collections::BTreeSet;

use mgm_core::store::ViewSet;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `t` random vectors in `d` dimensions. With `relu`, coordinates are
/// clipped at zero (each vector keeps at least one positive entry), like
/// encoder outputs taken after a ReLU.
pub fn random_view_set(rng: &mut ChaCha8Rng, t: usize, d: usize, relu: bool) -> ViewSet {
    let members = (0..t)
        .map(|_| loop {
            let v: Vec<f64> = (0..d)
                .map(|_| {
                    let g = gaussian(rng);
                    if relu { g.max(0.0) } else { g }
                })
                .collect();
            if v.iter().any(|x| *x != 0.0) {
                break v;
            }
        })
        .collect();
    ViewSet::from_vectors(members)
}

/// Accelerated projected gradient (FISTA with gradient restart) on
/// `½xᵀHx − bᵀx, x ≥ 0`, from the origin with step `1/λmax(H)`. Plain
/// projected gradient stalls on rank-deficient Gram matrices, where only the
/// ridge curves some directions; momentum gets through them within the step
/// budget. Stops when an iteration moves no coordinate by more than `1e-16`.
pub fn projected_gradient(h: &DMatrix<f64>, b: &DVector<f64>, max_steps: usize) -> Vec<f64> {
    let step = 1.0 / h.clone().symmetric_eigen().eigenvalues.max();
    let mut x = DVector::zeros(b.len());
    let mut y = x.clone();
    let mut t = 1.0f64;
    for k in 0..max_steps {
        let next = (&y - (h * &y - b) * step).map(|v| v.max(0.0));
        let dir = &next - &x;
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        if (&y - &next).dot(&dir) > 0.0 {
            t = 1.0;
            y = next.clone();
        } else {
            y = &next + &dir * ((t - 1.0) / t_next);
            t = t_next;
        }
        let moved = dir.amax();
        x = next;
        if moved <= 1e-16 && k > 10 {
            break;
        }
    }
    x.iter().copied().collect()
}

/// Exact minimizer for small strictly convex problems: tries every support,
/// solves the equality system on it and keeps the candidate with the
/// smallest KKT violation.
pub fn enumerate_supports(h: &DMatrix<f64>, b: &DVector<f64>) -> Vec<f64> {
    let n = b.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let sup: Vec<usize> = (0..n).filter(|j| mask >> j & 1 == 1).collect();
        let sub = DMatrix::from_fn(sup.len(), sup.len(), |r, c| h[(sup[r], sup[c])]);
        let rhs = DVector::from_fn(sup.len(), |r, _| b[sup[r]]);
        let Some(z) = sub.lu().solve(&rhs) else { continue };
        if z.iter().any(|v| *v <= 0.0) {
            continue;
        }
        let mut x = vec![0.0; n];
        for (&p, &v) in sup.iter().zip(z.iter()) {
            x[p] = v;
        }
        let g = h * DVector::from_column_slice(&x) - b;
        let violation = (0..n)
            .map(|j| if x[j] > 0.0 { g[j].abs() } else { (-g[j]).max(0.0) })
            .fold(0.0, f64::max);
        if best.as_ref().is_none_or(|(v, _)| violation < *v) {
            best = Some((violation, x));
        }
    }
    best.map(|(_, x)| x).unwrap_or_else(|| vec![0.0; n])
}

/// Complete linkage recomputed from scratch at every merge: cluster distance
/// is the maximum over all member pairs, the minimum pair (ties to the
/// smallest ids) merges. Returns (a, b, height, size) per step with
/// SciPy-style ids.
pub fn brute_force_linkage(dist: &DMatrix<f64>) -> Vec<(usize, usize, f64, usize)> {
    let n = dist.nrows();
    let mut clusters: Vec<(usize, BTreeSet<usize>)> =
        (0..n).map(|i| (i, BTreeSet::from([i]))).collect();
    let mut out = Vec::new();
    for s in 0..n.saturating_sub(1) {
        let mut best: Option<(usize, usize, f64)> = None;
        for x in 0..clusters.len() {
            for y in x + 1..clusters.len() {
                let mut h: f64 = 0.0;
                for &i in &clusters[x].1 {
                    for &j in &clusters[y].1 {
                        h = h.max(dist[(i, j)]);
                    }
                }
                let (ia, ib) = (clusters[x].0.min(clusters[y].0), clusters[x].0.max(clusters[y].0));
                let better = match best {
                    None => true,
                    Some((bx, by, bh)) => {
                        let (ba, bb) =
                            (clusters[bx].0.min(clusters[by].0), clusters[bx].0.max(clusters[by].0));
                        h < bh || (h == bh && (ia, ib) < (ba, bb))
                    }
                };
                if better {
                    best = Some((x, y, h));
                }
            }
        }
        let (x, y, h) = best.unwrap();
        let (idx, idy) = (clusters[x].0, clusters[y].0);
        let mut members = clusters[x].1.clone();
        members.extend(&clusters[y].1);
        let size = members.len();
        clusters.remove(y);
        clusters.remove(x);
        clusters.push((n + s, members));
        out.push((idx.min(idy), idx.max(idy), h, size));
    }
    out
}

/// Random symmetric distance matrix with a zero diagonal. Entries are drawn
/// from a small grid so that ties occur.
pub fn random_distances(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i + 1..m {
            let v = (rng.random_range(1..=20) as f64) / 4.0;
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Two-sided Student-t tail `P(|T| ≥ |t|)` with `df` degrees of freedom by
/// composite Simpson integration of the unnormalized density, after
/// mapping `[0, ∞)` onto `[0, 1)` with `t = u / (1 − u)`.
pub fn t_two_sided_numeric(t: f64, df: f64) -> f64 {
    let density = |x: f64| (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    let mapped = |u: f64| {
        if u >= 1.0 {
            return 0.0;
        }
        let x = u / (1.0 - u);
        density(x) / ((1.0 - u) * (1.0 - u))
    };
    let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize| {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + k as f64 * h);
        }
        s * h / 3.0
    };
    let t = t.abs();
    let u0 = t / (1.0 + t);
    let tail = simpson(&mapped, u0, 1.0, 200_000);
    let half = simpson(&mapped, 0.0, 1.0, 200_000);
    tail / half
}

/// Least squares with an intercept through the normal equations.
pub fn ols(x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let m = x.nrows();
    let xm = DVector::from_fn(x.ncols(), |j, _| x.column(j).sum() / m as f64);
    let ym = y.iter().sum::<f64>() / m as f64;
    let xc = DMatrix::from_fn(m, x.ncols(), |i, j| x[(i, j)] - xm[j]);
    let yc = DVector::from_fn(m, |i, _| y[i] - ym);
    let beta = (xc.transpose() * &xc).lu().solve(&(xc.transpose() * yc)).unwrap();
    beta.iter().copied().collect()
}

/// Upper tail of Binomial(n, 1/2) at `k`, summed exactly in log space.
pub fn sign_test_p(successes: usize, n: usize) -> f64 {
    let ln_choose = |n: usize, k: usize| -> f64 {
        (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum()
    };
    (successes..=n).map(|k| (ln_choose(n, k) - n as f64 * 2f64.ln()).exp()).sum()
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub mod fixtures {
    use mgm_core::nnk::{build_graph, KernelConfig, NNKGraph};
    use mgm_core::pipeline::synth::{generate, SynthKind, SynthSpec};
    use mgm_core::store::{EmbeddingSet, Policy, ViewSet};
    use mgm_core::{cross_affinity, Normalization};

    pub fn spec(kind: SynthKind) -> SynthSpec {
        SynthSpec {
            model: format!("{kind:?}"),
            kind,
            policies: vec![Policy::Sem, Policy::Augs],
            ..Default::default()
        }
    }

    /// Median neighbor count of every view-set of the augmentation policy
    /// for `d`-dimensional subspace data (D=20, T=50, 100 view-sets).
    pub fn subspace_medians(d: usize, seed: u64) -> Vec<f64> {
        let s = SynthSpec { d, n_items: 100, per_class: 5, t_views: 50, dim: 20, ..spec(SynthKind::SubspaceD) };
        let sets = generate(&s, seed).unwrap();
        let cfg = KernelConfig::default();
        sets[1]
            .view_sets()
            .unwrap()
            .iter()
            .map(|vs| {
                let g = build_graph(vs, &cfg).unwrap();
                let mut counts: Vec<f64> = g.neighborhoods.iter().map(|n| n.len() as f64).collect();
                super::median(&mut counts)
            })
            .collect()
    }

    /// Semantic fixture used for the cross-affinity contrast: augmentations
    /// either move inside the class span or far outside it.
    pub fn cross_fixture(kind: SynthKind) -> SynthSpec {
        match kind {
            SynthKind::OrthogonalAugs => SynthSpec { d: 12, scale: 3.0, ..spec(kind) },
            _ => spec(kind),
        }
    }

    fn graphs(set: &EmbeddingSet) -> Vec<(ViewSet, NNKGraph)> {
        let cfg = KernelConfig::default();
        set.view_sets()
            .unwrap()
            .into_iter()
            .map(|v| {
                let g = build_graph(&v, &cfg).unwrap();
                (v, g)
            })
            .collect()
    }

    /// Mean Sem-Augs cross affinity over items and the number of items
    /// where it was undefined.
    pub fn mean_cross(s: &SynthSpec, seed: u64, normalization: Normalization) -> (f64, usize) {
        let sets = generate(s, seed).unwrap();
        let sem = graphs(&sets[0]);
        let aug = graphs(&sets[1]);
        let find = |gs: &[(ViewSet, NNKGraph)], item| {
            gs.iter().position(|(v, _)| v.position_of((item, 0)).is_some()).unwrap()
        };
        let mut vals = Vec::new();
        for item in 0..s.n_items {
            let (sv, sg) = &sem[find(&sem, item)];
            let (av, ag) = &aug[find(&aug, item)];
            if let Ok(v) = cross_affinity((ag, av), (sg, sv), item, normalization) {
                vals.push(v);
            }
        }
        (vals.iter().sum::<f64>() / vals.len() as f64, s.n_items - vals.len())
    }
}
