//! Independent solution oracles for the solver tests: exhaustive vertex
//! enumeration for LPs and a multi-start penalty/projected-gradient method
//! for QCQPs. Both are deliberately different algorithm families from the
//! barrier solver they check.

#![allow(dead_code)]

use fogran_core::convexsolver::{ConvexQcqp, LinearProgram};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when the system is singular.
fn solve_square(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let (pivot, best) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if best < 1e-11 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r][col] / m[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    Some((0..n).map(|i| rhs[i] / m[i][i]).collect())
}

/// Maximizes the LP by enumerating every basic point: each choice of `n`
/// constraints (rows plus bound faces) active, kept if feasible.
pub fn lp_vertex_enumeration(lp: &LinearProgram<f64>) -> Option<(Vec<f64>, f64)> {
    let n = lp.objective.len();
    let mut rows: Vec<(Vec<f64>, f64)> = lp.rows.clone();
    for i in 0..n {
        let mut hi = vec![0.0; n];
        hi[i] = 1.0;
        rows.push((hi, lp.upper[i]));
        let mut lo = vec![0.0; n];
        lo[i] = -1.0;
        rows.push((lo, -lp.lower[i]));
    }
    let total = rows.len();
    let feasible = |x: &[f64]| {
        rows.iter().all(|(a, b)| {
            let lhs: f64 = a.iter().zip(x.iter()).map(|(ai, xi)| ai * xi).sum();
            lhs <= b + 1e-9 * (1.0 + b.abs())
        })
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut subset = vec![0usize; n];
    fn recurse(
        rows: &[(Vec<f64>, f64)],
        subset: &mut Vec<usize>,
        depth: usize,
        start: usize,
        n: usize,
        total: usize,
        objective: &[f64],
        feasible: &dyn Fn(&[f64]) -> bool,
        best: &mut Option<(Vec<f64>, f64)>,
    ) {
        if depth == n {
            let a: Vec<Vec<f64>> = subset.iter().map(|&i| rows[i].0.clone()).collect();
            let b: Vec<f64> = subset.iter().map(|&i| rows[i].1).collect();
            if let Some(x) = solve_square(&a, &b) {
                if feasible(&x) {
                    let value: f64 = objective.iter().zip(x.iter()).map(|(c, xi)| c * xi).sum();
                    if best.as_ref().map_or(true, |(_, v)| value > *v) {
                        *best = Some((x, value));
                    }
                }
            }
            return;
        }
        for i in start..total {
            subset[depth] = i;
            recurse(rows, subset, depth + 1, i + 1, n, total, objective, feasible, best);
        }
    }
    recurse(&rows, &mut subset, 0, 0, n, total, &lp.objective, &feasible, &mut best);
    best
}

/// Random bounded feasible LP with `n` variables and `extra` rows; the rows
/// pass through an interior point so the program is never empty.
pub fn random_bounded_lp(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> LinearProgram<f64> {
    let lower: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..0.0)).collect();
    let upper: Vec<f64> = lower.iter().map(|lo| lo + rng.gen_range(0.5..4.0)).collect();
    let mid: Vec<f64> = lower.iter().zip(upper.iter()).map(|(lo, hi)| (lo + hi) / 2.0).collect();
    let rows = (0..extra)
        .map(|_| {
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let at_mid: f64 = a.iter().zip(mid.iter()).map(|(ai, xi)| ai * xi).sum();
            (a, at_mid + rng.gen_range(0.1..2.0))
        })
        .collect();
    let objective = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    LinearProgram { objective, lower, upper, rows }
}

/// Minimizes the QCQP with an augmented-Lagrangian outer loop and gradient
/// descent with backtracking inside, restarted from several points;
/// returns the best (x, objective) found.
pub fn qcqp_penalty_oracle(prob: &ConvexQcqp<f64>, starts: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let n = prob.layout.total();
    let m = prob.constraints.len();
    // augmented terms use max(0, lambda + rho*g); their value and gradient
    let value = |x: &[f64], lambda: &[f64], rho: f64| -> f64 {
        let mut v = prob.objective_value(x);
        for j in 0..m {
            let g = prob.constraint_value(j, x) - prob.constraints[j].rhs;
            let t = (lambda[j] + rho * g).max(0.0);
            v += (t * t - lambda[j] * lambda[j]) / (2.0 * rho);
        }
        v
    };
    let grad = |x: &[f64], lambda: &[f64], rho: f64| -> Vec<f64> {
        let mut out = vec![0.0; n];
        prob.objective.grad_acc(&prob.layout, x, 1.0, &mut out);
        for j in 0..m {
            let g = prob.constraint_value(j, x) - prob.constraints[j].rhs;
            let t = (lambda[j] + rho * g).max(0.0);
            if t > 0.0 {
                prob.constraints[j].expr.grad_acc(&prob.layout, x, t, &mut out);
            }
        }
        out
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in starts {
        let mut x = start.clone();
        let mut lambda = vec![0.0; m];
        let mut rho = 1e2;
        for _outer in 0..40 {
            let mut step = 1.0;
            for _ in 0..3000 {
                let g = grad(&x, &lambda, rho);
                let gnorm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if gnorm < 1e-12 {
                    break;
                }
                let v0 = value(&x, &lambda, rho);
                let mut alpha = step;
                let mut moved = false;
                for _ in 0..60 {
                    let x_try: Vec<f64> =
                        x.iter().zip(g.iter()).map(|(xi, gi)| xi - alpha * gi).collect();
                    if value(&x_try, &lambda, rho) < v0 - 0.2 * alpha * gnorm * gnorm {
                        x = x_try;
                        step = (alpha * 2.0).min(1e3);
                        moved = true;
                        break;
                    }
                    alpha *= 0.5;
                }
                if !moved {
                    break;
                }
            }
            let mut worst = 0.0f64;
            for j in 0..m {
                let g = prob.constraint_value(j, &x) - prob.constraints[j].rhs;
                lambda[j] = (lambda[j] + rho * g).max(0.0);
                worst = worst.max(g);
            }
            if worst < 1e-10 {
                break;
            }
            rho = (rho * 3.0).min(1e6);
        }
        let worst = (0..m)
            .map(|j| prob.constraint_value(j, &x) - prob.constraints[j].rhs)
            .fold(0.0f64, f64::max);
        if worst < 1e-7 {
            let v = prob.objective_value(&x);
            if best.as_ref().map_or(true, |(_, bv)| v < *bv) {
                best = Some((x, v));
            }
        }
    }
    best.expect("penalty oracle found no feasible candidate")
}

/// Deterministic perturbed copies of a base start.
pub fn scatter_starts(rng: &mut ChaCha8Rng, base: &[f64], count: usize, radius: f64) -> Vec<Vec<f64>> {
    let mut starts = vec![base.to_vec()];
    for _ in 0..count {
        starts.push(base.iter().map(|&v| v + rng.gen_range(-radius..radius)).collect());
    }
    starts
}

/// Brute-force minimization over uniform samples of a box, keeping the
/// best feasible candidate. The budget is spent in stages that re-center
/// and shrink the box around the incumbent, which is what lets a sample
/// budget this small resolve optima pressed against constraint
/// boundaries. Suits only the smallest instances.
pub fn qcqp_random_search(
    prob: &ConvexQcqp<f64>,
    rng: &mut ChaCha8Rng,
    lo: &[f64],
    hi: &[f64],
    samples: usize,
    incumbent: Option<&[f64]>,
) -> (Vec<f64>, f64) {
    let n = prob.layout.total();
    assert_eq!(lo.len(), n);
    let stages = 6;
    let per_stage = samples / stages;
    let mut best: Option<(Vec<f64>, f64)> = incumbent.and_then(|x0| {
        let feasible = (0..prob.constraints.len())
            .all(|j| prob.constraint_value(j, x0) <= prob.constraints[j].rhs);
        feasible.then(|| (x0.to_vec(), prob.objective_value(x0)))
    });
    let mut cur_lo = lo.to_vec();
    let mut cur_hi = hi.to_vec();
    let mut x = vec![0.0; n];
    for _stage in 0..stages {
        for _ in 0..per_stage {
            for i in 0..n {
                x[i] = rng.gen_range(cur_lo[i]..cur_hi[i]);
            }
            let feasible = (0..prob.constraints.len())
                .all(|j| prob.constraint_value(j, &x) <= prob.constraints[j].rhs);
            if feasible {
                let v = prob.objective_value(&x);
                if best.as_ref().map_or(true, |(_, bv)| v < *bv) {
                    best = Some((x.clone(), v));
                }
            }
        }
        if let Some((center, _)) = &best {
            for i in 0..n {
                let width = (cur_hi[i] - cur_lo[i]) * 0.35;
                cur_lo[i] = (center[i] - width / 2.0).max(lo[i]);
                cur_hi[i] = (center[i] + width / 2.0).min(hi[i]);
            }
        }
    }
    best.expect("random search found no feasible sample")
}
