//! Log-barrier Newton core shared by the QCQP and LP entry points.
//!
//! Small problems assemble the dense Newton system directly. Large
//! block-structured problems factor the block-diagonal curvature and fold
//! the barrier's rank-one terms in with the Woodbury identity, which keeps
//! a Newton step near-linear in the number of variables.

use super::{ConvexQcqp, QuadExpr, Solution, SolveStatus, SolverError, SolverSettings};
use crate::linalg::{dot, RMat};
use crate::{real, Real};

struct BlockFactor<T> {
    factors: Vec<RMat<T>>,
}

impl<T: Real> BlockFactor<T> {
    fn solve(&self, prob: &ConvexQcqp<T>, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); v.len()];
        for (b, l) in self.factors.iter().enumerate() {
            let r = prob.layout.range(b);
            let sol = RMat::cholesky_solve_vec(l, &v[r.clone()]);
            out[r].copy_from_slice(&sol);
        }
        out
    }
}

fn add_expanded<T: Real>(h: &mut RMat<T>, prob: &ConvexQcqp<T>, expr: &QuadExpr<T>, scale: T) {
    for term in &expr.quads {
        let r = prob.layout.range(term.block);
        match &term.mat {
            super::BlockMat::Dense(m) => {
                for i in 0..m.rows {
                    for j in 0..m.cols {
                        h[(r.start + i, r.start + j)] = h[(r.start + i, r.start + j)] + scale * m[(i, j)];
                    }
                }
            }
            super::BlockMat::Diag(d) => {
                for (i, &di) in d.iter().enumerate() {
                    h[(r.start + i, r.start + i)] = h[(r.start + i, r.start + i)] + scale * di;
                }
            }
        }
    }
}

/// One Newton direction `dx` with `H dx = grad`.
fn newton_direction<T: Real>(
    prob: &ConvexQcqp<T>,
    settings: &SolverSettings<T>,
    t: T,
    slacks: &[T],
    con_grads: &[Vec<T>],
    grad: &[T],
) -> Option<Vec<T>> {
    let n = prob.layout.total();
    if n <= settings.dense_limit {
        let mut h = RMat::zeros(n, n);
        add_expanded(&mut h, prob, &prob.objective, t);
        for (j, c) in prob.constraints.iter().enumerate() {
            add_expanded(&mut h, prob, &c.expr, T::one() / slacks[j]);
            let w = T::one() / (slacks[j] * slacks[j]);
            let v = &con_grads[j];
            for a in 0..n {
                if v[a] == T::zero() {
                    continue;
                }
                for b in 0..n {
                    h[(a, b)] = h[(a, b)] + w * v[a] * v[b];
                }
            }
        }
        let mut ridge = settings.psd_ridge * (T::one() + h.mean_diag().abs());
        for _ in 0..6 {
            if let Ok(l) = h.cholesky() {
                return Some(RMat::cholesky_solve_vec(&l, grad));
            }
            h.add_diag(ridge);
            ridge = ridge * real::<T>(100.0);
        }
        return None;
    }

    // Block-diagonal curvature plus rank-one barrier corrections.
    let nb = prob.layout.num_blocks();
    let mut blocks: Vec<RMat<T>> = (0..nb).map(|b| RMat::zeros(prob.layout.dim(b), prob.layout.dim(b))).collect();
    for term in &prob.objective.quads {
        term.mat.add_into(&mut blocks[term.block], t);
    }
    for (j, c) in prob.constraints.iter().enumerate() {
        let w = T::one() / slacks[j];
        for term in &c.expr.quads {
            term.mat.add_into(&mut blocks[term.block], w);
        }
    }
    let scale = blocks.iter().map(|b| b.mean_diag().abs()).fold(T::zero(), T::max);
    let mut delta = settings.psd_ridge * (T::one() + scale);
    let factor = 'factor: {
        for _ in 0..6 {
            let mut ok = Vec::with_capacity(nb);
            let mut failed = false;
            for b in &blocks {
                let mut m = b.clone();
                m.add_diag(delta);
                match m.cholesky() {
                    Ok(l) => ok.push(l),
                    Err(_) => {
                        failed = true;
                        break;
                    }
                }
            }
            if !failed {
                break 'factor Some(BlockFactor { factors: ok });
            }
            delta = delta * real::<T>(100.0);
        }
        None
    }?;

    let m = prob.constraints.len();
    let base = factor.solve(prob, grad);
    if m == 0 {
        return Some(base);
    }
    let u: Vec<Vec<T>> = (0..m)
        .map(|j| {
            let w = T::one() / slacks[j];
            con_grads[j].iter().map(|&v| v * w).collect()
        })
        .collect();
    let w_cols: Vec<Vec<T>> = u.iter().map(|uj| factor.solve(prob, uj)).collect();
    let mut cap = RMat::identity(m);
    for a in 0..m {
        for b in 0..m {
            cap[(a, b)] = cap[(a, b)] + dot(&u[a], &w_cols[b]);
        }
    }
    let l = cap.cholesky().ok()?;
    let z: Vec<T> = (0..m).map(|j| dot(&u[j], &base)).collect();
    let y = RMat::cholesky_solve_vec(&l, &z);
    let mut dx = base;
    for j in 0..m {
        for (d, &w) in dx.iter_mut().zip(w_cols[j].iter()) {
            *d = *d - y[j] * w;
        }
    }
    Some(dx)
}

pub(crate) fn minimize<T: Real>(
    prob: &ConvexQcqp<T>,
    settings: &SolverSettings<T>,
    x0: &[T],
    stop_when_below: Option<(usize, T)>,
) -> Result<Solution<T>, SolverError> {
    let n = prob.layout.total();
    let m = prob.constraints.len();
    let mut x = x0.to_vec();
    let mut t = settings.initial_t.unwrap_or_else(T::one);
    let mut newton_steps = 0usize;
    let mut stage_objectives = Vec::new();
    let mut converged = false;
    let c1 = real::<T>(0.01);
    let half = real::<T>(0.5);

    'stages: for _stage in 0..settings.max_stages {
        for _it in 0..settings.max_newton_per_stage {
            let slacks = prob.slacks(&x);
            if slacks.iter().any(|s| !(*s > T::zero()) || !s.is_finite()) {
                break 'stages; // lost the interior, keep the last iterate
            }
            let mut grad = vec![T::zero(); n];
            prob.objective.grad_acc(&prob.layout, &x, t, &mut grad);
            let mut con_grads = Vec::with_capacity(m);
            for (j, c) in prob.constraints.iter().enumerate() {
                let mut g = vec![T::zero(); n];
                c.expr.grad_acc(&prob.layout, &x, T::one(), &mut g);
                for (gi, &ci) in grad.iter_mut().zip(g.iter()) {
                    *gi = *gi + ci / slacks[j];
                }
                con_grads.push(g);
            }
            let Some(dx) = newton_direction(prob, settings, t, &slacks, &con_grads, &grad) else {
                break 'stages;
            };
            let decrement = dot(&grad, &dx);
            if !(decrement > settings.newton_tol * real::<T>(2.0)) || !decrement.is_finite() {
                break; // centered for this t
            }
            // Constraints are quadratics, so every slack is exact along the
            // ray x - alpha dx: slack_j(alpha) = s_j + alpha a_j - alpha^2/2 b_j.
            let ray: Vec<(T, T)> = prob
                .constraints
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    let a = dot(&con_grads[j], &dx);
                    let mut b = T::zero();
                    for term in &c.expr.quads {
                        b = b + term.mat.quad_form(&dx[prob.layout.range(term.block)]);
                    }
                    (a, b)
                })
                .collect();
            let f0_lin = {
                let mut g0 = vec![T::zero(); n];
                prob.objective.grad_acc(&prob.layout, &x, T::one(), &mut g0);
                dot(&g0, &dx)
            };
            let f0_quad = prob
                .objective
                .quads
                .iter()
                .map(|term| term.mat.quad_form(&dx[prob.layout.range(term.block)]))
                .sum::<T>();
            let f0_now = prob.objective_value(&x);
            let psi0 = t * f0_now - slacks.iter().map(|s| s.ln()).sum::<T>();
            let psi_at = |alpha: T| -> T {
                let mut psi = t * (f0_now - alpha * f0_lin + alpha * alpha * half * f0_quad);
                for (j, &(a, b)) in ray.iter().enumerate() {
                    let s = slacks[j] + alpha * a - alpha * alpha * half * b;
                    if !(s > T::zero()) || !s.is_finite() {
                        return T::infinity();
                    }
                    psi = psi - s.ln();
                }
                psi
            };
            let mut alpha = T::one();
            let mut accepted = false;
            for _ in 0..60 {
                if psi_at(alpha) <= psi0 - c1 * alpha * decrement {
                    accepted = true;
                    break;
                }
                alpha = alpha * half;
            }
            if !accepted {
                break; // stalled at this t, advance the schedule
            }
            for (xi, &di) in x.iter_mut().zip(dx.iter()) {
                *xi = *xi - alpha * di;
            }
            newton_steps += 1;
            if let Some((idx, threshold)) = stop_when_below {
                if x[idx] < threshold {
                    return Ok(Solution {
                        objective: prob.objective_value(&x),
                        multipliers: multipliers(prob, &x, t),
                        gap: real::<T>(m as f64) / t,
                        stage_objectives,
                        newton_steps,
                        status: SolveStatus::Optimal,
                        x,
                    });
                }
            }
        }
        stage_objectives.push(prob.objective_value(&x));
        let gap = real::<T>(m as f64) / t;
        if gap <= settings.gap_tol {
            converged = true;
            break;
        }
        t = t * settings.t_multiplier;
    }

    Ok(Solution {
        objective: prob.objective_value(&x),
        multipliers: multipliers(prob, &x, t),
        gap: real::<T>(m as f64) / t,
        stage_objectives,
        newton_steps,
        status: if converged { SolveStatus::Optimal } else { SolveStatus::IterationLimit },
        x,
    })
}

fn multipliers<T: Real>(prob: &ConvexQcqp<T>, x: &[T], t: T) -> Vec<T> {
    prob.slacks(x)
        .into_iter()
        .map(|s| if s > T::zero() { T::one() / (t * s) } else { T::infinity() })
        .collect()
}

/// Slack-minimization phase I: finds a strictly feasible point of `prob`
/// starting anywhere, or reports that none exists.
pub(crate) fn phase_one<T: Real>(
    prob: &ConvexQcqp<T>,
    settings: &SolverSettings<T>,
    x0: &[T],
) -> Result<Vec<T>, SolverError> {
    let mut layout = prob.layout.clone();
    layout.push_block(1);
    let s_idx = layout.total() - 1;
    let mut aug = ConvexQcqp::new(layout);
    aug.objective.lin[s_idx] = T::one();
    for c in &prob.constraints {
        let mut lin = c.expr.lin.clone();
        lin.push(-T::one());
        aug.add_constraint(QuadExpr { quads: c.expr.quads.clone(), lin }, c.rhs);
    }
    let worst = prob
        .slacks(x0)
        .into_iter()
        .fold(T::neg_infinity(), |acc, s| acc.max(-s));
    let mut x_aug = x0.to_vec();
    x_aug.push(worst.max(T::zero()) + T::one());

    let mut phase_settings = settings.clone();
    phase_settings.gap_tol = real::<T>(1e-10).max(settings.gap_tol);
    let margin = real::<T>(1e-9);
    let sol = minimize(&aug, &phase_settings, &x_aug, Some((s_idx, -margin)))?;
    if sol.x[s_idx] < -margin * real::<T>(0.5) {
        Ok(sol.x[..s_idx].to_vec())
    } else {
        Err(SolverError::InfeasibleStart)
    }
}
