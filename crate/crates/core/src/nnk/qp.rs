//! Active-set solver for `min ½ xᵀHx − bᵀx  s.t. x ≥ 0` with `H` symmetric
//! positive definite.
//!
//! This is the Lawson–Hanson NNLS iteration written directly on the normal
//! equations: a passive set grows by the coordinate with the largest dual
//! value and shrinks whenever the unconstrained sub-solution leaves the
//! feasible orthant.
//!
//! A clamped cosine Gram matrix has non-negative entries, so the objective is
//! bounded below on the orthant, but clamping can make it indefinite. When
//! that happens and the active-set iteration stalls, projected coordinate
//! descent finds a KKT point instead; the problem then has local minima and
//! the one returned is the one reached from zero.

use nalgebra::{DMatrix, DVector};

/// Coordinates enter the passive set only when their dual value exceeds this
/// multiple of `max(1, ‖b‖∞)`. It sits at the ridge scale on purpose: on a
/// rank-deficient Gram the ridge alone picks the minimum-norm point of a flat
/// optimal face, which spreads weight over every collinear candidate. Ignoring
/// pulls of order `ridge · x` keeps the vertex the iteration reaches first,
/// so neighborhoods stay sparse.
pub const DUAL_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Largest KKT violation: `max(−g_j)` over zero coordinates and `|g_j|`
    /// over positive ones, where `g = Hx − b`.
    pub kkt_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpFailure {
    pub iterations: usize,
    pub kkt_residual: f64,
}

pub fn objective(h: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(h * x)) - b.dot(x)
}

pub fn kkt_residual(h: &DMatrix<f64>, b: &DVector<f64>, x: &[f64]) -> f64 {
    let xv = DVector::from_column_slice(x);
    let g = h * &xv - b;
    x.iter()
        .zip(g.iter())
        .map(|(&xi, &gi)| if xi > 0.0 { gi.abs() } else { (-gi).max(0.0) })
        .fold(0.0, f64::max)
}

fn solve_passive(h: &DMatrix<f64>, b: &DVector<f64>, passive: &[usize]) -> Option<Vec<f64>> {
    let k = passive.len();
    let sub = DMatrix::from_fn(k, k, |r, c| h[(passive[r], passive[c])]);
    let rhs = DVector::from_fn(k, |r, _| b[passive[r]]);
    let solve = |m: &DMatrix<f64>, v: &DVector<f64>| match m.clone().cholesky() {
        Some(ch) => Some(ch.solve(v)),
        None => m.clone().lu().solve(v),
    };
    let mut z = solve(&sub, &rhs)?;
    // one step of iterative refinement
    let residual = &rhs - &sub * &z;
    if let Some(dz) = solve(&sub, &residual) {
        z += dz;
    }
    z.iter().all(|v| v.is_finite()).then(|| z.iter().copied().collect())
}

/// Stationarity target for the result.
pub const KKT_TOLERANCE: f64 = 1e-8;
const MAX_SWEEPS: usize = 100_000;

/// Solves the non-negative QP. `max_iterations` bounds the number of
/// passive-set solves; the coordinate-descent fallback for indefinite `h`
/// counts its sweeps on top.
pub fn solve_nonnegative_qp(
    h: &DMatrix<f64>,
    b: &DVector<f64>,
    max_iterations: usize,
) -> Result<QpSolution, QpFailure> {
    let first = active_set(h, b, max_iterations);
    if matches!(&first, Ok(sol) if sol.kkt_residual <= KKT_TOLERANCE) {
        return first;
    }
    if h.clone().cholesky().is_some() {
        return first;
    }
    let spent = match &first {
        Ok(sol) => sol.iterations,
        Err(f) => f.iterations,
    };
    let (x, sweeps) = coordinate_descent(h, b);
    let kkt_residual = kkt_residual(h, b, &x);
    if kkt_residual <= KKT_TOLERANCE {
        Ok(QpSolution { x, iterations: spent + sweeps, kkt_residual })
    } else {
        Err(QpFailure { iterations: spent + sweeps, kkt_residual })
    }
}

/// Gauss–Seidel sweeps of exact one-coordinate minimization, clipped at
/// zero, from the origin. Every few sweeps the equality system on the
/// current support is solved exactly; descent stops once that solution is
/// stationary.
fn coordinate_descent(h: &DMatrix<f64>, b: &DVector<f64>) -> (Vec<f64>, usize) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut g: Vec<f64> = b.iter().map(|v| -v).collect();
    for sweep in 1..=MAX_SWEEPS {
        let mut change: f64 = 0.0;
        for j in 0..n {
            let new = (x[j] - g[j] / h[(j, j)]).max(0.0);
            let d = new - x[j];
            if d != 0.0 {
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi += h[(i, j)] * d;
                }
                x[j] = new;
                change = change.max(d.abs());
            }
        }
        if change == 0.0 {
            return (x, sweep);
        }
        if sweep % 5 == 0 {
            if let Some(y) = polish(h, b, &x) {
                return (y, sweep);
            }
        }
    }
    (x, MAX_SWEEPS)
}

/// Exact solution on the support of `x`, if it stays in the orthant and
/// satisfies the KKT conditions.
fn polish(h: &DMatrix<f64>, b: &DVector<f64>, x: &[f64]) -> Option<Vec<f64>> {
    let support: Vec<usize> = (0..x.len()).filter(|&j| x[j] > 0.0).collect();
    if support.is_empty() {
        return None;
    }
    let z = solve_passive(h, b, &support)?;
    if z.iter().any(|&v| v <= 0.0) {
        return None;
    }
    let mut y = vec![0.0; x.len()];
    for (&p, &v) in support.iter().zip(&z) {
        y[p] = v;
    }
    (kkt_residual(h, b, &y) <= KKT_TOLERANCE * 1e-2).then_some(y)
}

fn active_set(
    h: &DMatrix<f64>,
    b: &DVector<f64>,
    max_iterations: usize,
) -> Result<QpSolution, QpFailure> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut passive: Vec<usize> = Vec::new();
    let mut blocked = vec![false; n];
    let mut iterations = 0;
    let threshold = DUAL_TOLERANCE * b.amax().max(1.0);

    let fail = |x: &[f64], iterations| QpFailure { iterations, kkt_residual: kkt_residual(h, b, x) };

    loop {
        let xv = DVector::from_column_slice(&x);
        let dual = b - h * xv;
        let entering = (0..n)
            .filter(|&j| !blocked[j] && !passive.contains(&j))
            .map(|j| (j, dual[j]))
            .fold(None, |best: Option<(usize, f64)>, (j, w)| match best {
                Some((_, bw)) if bw >= w => best,
                _ => Some((j, w)),
            });
        let Some((j, w)) = entering else { break };
        if w <= threshold {
            break;
        }
        passive.push(j);
        passive.sort_unstable();

        loop {
            iterations += 1;
            if iterations > max_iterations {
                return Err(fail(&x, iterations - 1));
            }
            let Some(z) = solve_passive(h, b, &passive) else {
                return Err(fail(&x, iterations));
            };
            if z.iter().all(|&v| v > 0.0) {
                x.iter_mut().for_each(|v| *v = 0.0);
                for (&p, &v) in passive.iter().zip(&z) {
                    x[p] = v;
                }
                blocked.iter_mut().for_each(|b| *b = false);
                break;
            }
            let steps: Vec<f64> = passive
                .iter()
                .zip(&z)
                .map(|(&p, &zp)| match x[p] - zp {
                    _ if zp > 0.0 => f64::INFINITY,
                    gap if gap > 0.0 => x[p] / gap,
                    _ => 0.0,
                })
                .collect();
            let alpha = steps.iter().copied().fold(f64::INFINITY, f64::min);
            for (&p, &zp) in passive.iter().zip(&z) {
                x[p] += alpha * (zp - x[p]);
            }
            let leaving: Vec<usize> = passive
                .iter()
                .zip(&steps)
                .filter(|&(&p, &s)| s <= alpha || x[p] <= 0.0)
                .map(|(&p, _)| p)
                .collect();
            for &p in &leaving {
                x[p] = 0.0;
            }
            passive.retain(|p| !leaving.contains(p));
            // An entering coordinate that cannot move into the orthant has a
            // dual value at rounding level; keep it out until the next step.
            if alpha == 0.0 && leaving.contains(&j) {
                blocked[j] = true;
            }
            if passive.is_empty() {
                break;
            }
        }
    }

    let kkt_residual = kkt_residual(h, b, &x);
    Ok(QpSolution { x, iterations, kkt_residual })
}
