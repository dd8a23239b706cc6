//! In-repo convex solver: a log-barrier interior-point method for convex
//! quadratically-constrained quadratic programs over block-structured real
//! variables, with an LP front end running on the same barrier core.
//!
//! Programs are expressed over a flat real vector partitioned into blocks
//! (one block per embedded complex precoder column in the main use case).
//! Quadratic forms attach per block, which keeps the Newton systems
//! block-diagonal plus a low-rank barrier correction.

mod barrier;
pub mod embed;

use crate::linalg::{dot, norm_inf, RMat};
use crate::{real, Real};

/// Partition of the variable vector into contiguous blocks.
#[derive(Debug, Clone)]
pub struct VarLayout {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl VarLayout {
    pub fn new(dims: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(dims.len());
        let mut total = 0;
        for &d in &dims {
            offsets.push(total);
            total += d;
        }
        Self { dims, offsets, total }
    }

    pub fn single(dim: usize) -> Self {
        Self::new(vec![dim])
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn num_blocks(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self, block: usize) -> usize {
        self.dims[block]
    }

    pub fn range(&self, block: usize) -> std::ops::Range<usize> {
        self.offsets[block]..self.offsets[block] + self.dims[block]
    }

    /// Appends a block, returning its index.
    pub fn push_block(&mut self, dim: usize) -> usize {
        self.offsets.push(self.total);
        self.dims.push(dim);
        self.total += dim;
        self.dims.len() - 1
    }
}

/// Symmetric matrix of one quadratic term; per-eRRH energy forms are
/// diagonal and get a cheap representation.
#[derive(Debug, Clone)]
pub enum BlockMat<T> {
    Dense(RMat<T>),
    Diag(Vec<T>),
}

impl<T: Real> BlockMat<T> {
    pub fn dim(&self) -> usize {
        match self {
            BlockMat::Dense(m) => m.rows,
            BlockMat::Diag(d) => d.len(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            BlockMat::Dense(m) => m.is_finite(),
            BlockMat::Diag(d) => d.iter().all(|x| x.is_finite()),
        }
    }

    pub fn quad_form(&self, x: &[T]) -> T {
        match self {
            BlockMat::Dense(m) => m.quad_form(x),
            BlockMat::Diag(d) => d.iter().zip(x.iter()).map(|(&di, &xi)| di * xi * xi).sum(),
        }
    }

    /// `y += s * M x`
    pub fn matvec_acc(&self, x: &[T], s: T, y: &mut [T]) {
        match self {
            BlockMat::Dense(m) => m.matvec_acc(x, s, y),
            BlockMat::Diag(d) => {
                for ((yi, &di), &xi) in y.iter_mut().zip(d.iter()).zip(x.iter()) {
                    *yi = *yi + s * di * xi;
                }
            }
        }
    }

    /// `out += s * M` with `out` dense.
    pub fn add_into(&self, out: &mut RMat<T>, s: T) {
        match self {
            BlockMat::Dense(m) => out.add_assign_scaled(m, s),
            BlockMat::Diag(d) => {
                for (i, &di) in d.iter().enumerate() {
                    out[(i, i)] = out[(i, i)] + s * di;
                }
            }
        }
    }

    pub fn mean_diag(&self) -> T {
        match self {
            BlockMat::Dense(m) => m.mean_diag(),
            BlockMat::Diag(d) => {
                if d.is_empty() {
                    T::zero()
                } else {
                    d.iter().copied().sum::<T>() / real::<T>(d.len() as f64)
                }
            }
        }
    }
}

/// One `1/2 x_b^T M x_b` contribution of a quadratic expression.
#[derive(Debug, Clone)]
pub struct QuadTerm<T> {
    pub block: usize,
    pub mat: BlockMat<T>,
}

/// `1/2 sum_b x_b^T M_b x_b + lin^T x`
#[derive(Debug, Clone)]
pub struct QuadExpr<T> {
    pub quads: Vec<QuadTerm<T>>,
    pub lin: Vec<T>,
}

impl<T: Real> QuadExpr<T> {
    pub fn zero(layout: &VarLayout) -> Self {
        Self { quads: Vec::new(), lin: vec![T::zero(); layout.total()] }
    }

    pub fn value(&self, layout: &VarLayout, x: &[T]) -> T {
        let half = real::<T>(0.5);
        let mut v = dot(&self.lin, x);
        for term in &self.quads {
            v = v + half * term.mat.quad_form(&x[layout.range(term.block)]);
        }
        v
    }

    /// Adds `scale * gradient` into `out`.
    pub fn grad_acc(&self, layout: &VarLayout, x: &[T], scale: T, out: &mut [T]) {
        for (o, &l) in out.iter_mut().zip(self.lin.iter()) {
            *o = *o + scale * l;
        }
        for term in &self.quads {
            let r = layout.range(term.block);
            term.mat.matvec_acc(&x[r.clone()], scale, &mut out[r]);
        }
    }

    pub fn is_affine(&self) -> bool {
        self.quads.is_empty()
    }
}

/// Inequality `expr(x) <= rhs`.
#[derive(Debug, Clone)]
pub struct Constraint<T> {
    pub expr: QuadExpr<T>,
    pub rhs: T,
}

/// Convex QCQP in block-structured real variables:
/// minimize a convex quadratic subject to convex quadratic and affine rows.
#[derive(Debug, Clone)]
pub struct ConvexQcqp<T> {
    pub layout: VarLayout,
    pub objective: QuadExpr<T>,
    pub constraints: Vec<Constraint<T>>,
    /// Number of quadratic terms that needed a diagonal ridge to pass the
    /// positive-semidefiniteness check.
    pub ridged_terms: usize,
}

impl<T: Real> ConvexQcqp<T> {
    pub fn new(layout: VarLayout) -> Self {
        let objective = QuadExpr::zero(&layout);
        Self { layout, objective, constraints: Vec::new(), ridged_terms: 0 }
    }

    pub fn add_constraint(&mut self, expr: QuadExpr<T>, rhs: T) {
        self.constraints.push(Constraint { expr, rhs });
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        self.objective.value(&self.layout, x)
    }

    pub fn constraint_value(&self, j: usize, x: &[T]) -> T {
        self.constraints[j].expr.value(&self.layout, x)
    }

    /// Slack `rhs - expr(x)` per constraint; positive means strictly inside.
    pub fn slacks(&self, x: &[T]) -> Vec<T> {
        self.constraints.iter().map(|c| c.rhs - c.expr.value(&self.layout, x)).collect()
    }

    /// Symmetrizes every quadratic term and verifies positive
    /// semidefiniteness by Cholesky, ridging marginal failures.
    pub fn validate_psd(&mut self, ridge: T) -> Result<(), SolverError> {
        let layout = self.layout.clone();
        let mut ridged = 0;
        let mut check = |term: &mut QuadTerm<T>| -> Result<(), SolverError> {
            if term.mat.dim() != layout.dim(term.block) {
                return Err(SolverError::BadProblem("quadratic term shape mismatch".into()));
            }
            if !term.mat.is_finite() {
                return Err(SolverError::BadProblem("non-finite quadratic term".into()));
            }
            let scale = T::one().max(term.mat.mean_diag().abs());
            let probe = ridge * scale;
            match &mut term.mat {
                BlockMat::Diag(d) => {
                    let mut clamped = false;
                    for v in d.iter_mut() {
                        if *v < T::zero() {
                            if *v < -probe {
                                return Err(SolverError::BadProblem(
                                    "quadratic term is not positive semidefinite".into(),
                                ));
                            }
                            *v = T::zero();
                            clamped = true;
                        }
                    }
                    if clamped {
                        ridged += 1;
                    }
                    return Ok(());
                }
                BlockMat::Dense(m) => {
                    // symmetrize in place
                    for r in 0..m.rows {
                        for c in 0..r {
                            let avg = (m[(r, c)] + m[(c, r)]) * real::<T>(0.5);
                            m[(r, c)] = avg;
                            m[(c, r)] = avg;
                        }
                    }
                    let mut test = m.clone();
                    test.add_diag(probe);
                    if test.cholesky().is_ok() {
                        return Ok(());
                    }
                    // marginal indefiniteness: ridge the stored matrix and retry
                    m.add_diag(probe);
                    let mut test = m.clone();
                    test.add_diag(probe * real::<T>(100.0));
                    if test.cholesky().is_ok() {
                        ridged += 1;
                        return Ok(());
                    }
                    Err(SolverError::BadProblem("quadratic term is not positive semidefinite".into()))
                }
            }
        };
        let mut obj = std::mem::replace(&mut self.objective, QuadExpr { quads: vec![], lin: vec![] });
        for term in obj.quads.iter_mut() {
            check(term)?;
        }
        self.objective = obj;
        let mut cons = std::mem::take(&mut self.constraints);
        for c in cons.iter_mut() {
            for term in c.expr.quads.iter_mut() {
                check(term)?;
            }
        }
        self.constraints = cons;
        self.ridged_terms += ridged;
        Ok(())
    }

    fn validate_shapes(&self) -> Result<(), SolverError> {
        let n = self.layout.total();
        if self.objective.lin.len() != n {
            return Err(SolverError::BadProblem("objective linear term length mismatch".into()));
        }
        for c in &self.constraints {
            if c.expr.lin.len() != n {
                return Err(SolverError::BadProblem("constraint linear term length mismatch".into()));
            }
            if !c.rhs.is_finite() || !c.expr.lin.iter().all(|v| v.is_finite()) {
                return Err(SolverError::BadProblem("non-finite constraint data".into()));
            }
        }
        Ok(())
    }
}

/// Barrier schedule and tolerances. Defaults target f64.
#[derive(Debug, Clone)]
pub struct SolverSettings<T> {
    /// Initial barrier parameter; `None` starts at 1.
    pub initial_t: Option<T>,
    /// Multiplicative barrier increase per stage.
    pub t_multiplier: T,
    /// Newton decrement threshold (on lambda^2 / 2) ending a centering stage.
    pub newton_tol: T,
    pub max_newton_per_stage: usize,
    pub max_stages: usize,
    /// Primal feasibility tolerance used by phase I and KKT checks.
    pub feasibility_tol: T,
    /// Target duality gap `m / t`.
    pub gap_tol: T,
    /// Diagonal ridge for marginal PSD validation and singular blocks.
    pub psd_ridge: T,
    /// Problems at most this large assemble the Newton system densely;
    /// larger ones use the block-diagonal plus low-rank path.
    pub dense_limit: usize,
}

impl<T: Real> Default for SolverSettings<T> {
    fn default() -> Self {
        Self {
            initial_t: None,
            t_multiplier: real(20.0),
            newton_tol: real(1e-12),
            max_newton_per_stage: 80,
            max_stages: 48,
            feasibility_tol: real(1e-8),
            gap_tol: real(1e-9),
            psd_ridge: real(1e-10),
            dense_limit: 160,
        }
    }
}

impl<T: Real> SolverSettings<T> {
    /// Residual level `verify_kkt` is expected to meet on optimal output.
    pub fn kkt_tolerance(&self) -> T {
        (self.newton_tol * real::<T>(2.0)).sqrt().max(self.gap_tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct Solution<T> {
    pub x: Vec<T>,
    pub objective: T,
    pub status: SolveStatus,
    /// Barrier multiplier estimates, one per constraint.
    pub multipliers: Vec<T>,
    /// Final duality gap bound `m / t`.
    pub gap: T,
    /// Objective value after each centering stage.
    pub stage_objectives: Vec<T>,
    pub newton_steps: usize,
}

#[derive(Debug, Clone)]
pub enum SolverError {
    BadProblem(String),
    /// No strictly feasible point exists (or phase I could not find one).
    InfeasibleStart,
}

impl std::fmt::Display for SolverError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolverError::BadProblem(msg) => write!(f, "ill-formed problem: {msg}"),
            SolverError::InfeasibleStart => write!(f, "no strictly feasible point found"),
        }
    }
}

impl std::error::Error for SolverError {}

/// Solves the QCQP from `x0`. A strictly feasible `x0` is used directly;
/// otherwise a slack-minimization phase I recovers one, and the error
/// reports infeasibility if none exists.
pub fn solve_qcqp<T: Real>(
    prob: &ConvexQcqp<T>,
    settings: &SolverSettings<T>,
    x0: &[T],
) -> Result<Solution<T>, SolverError> {
    prob.validate_shapes()?;
    if x0.len() != prob.layout.total() {
        return Err(SolverError::BadProblem("initial point length mismatch".into()));
    }
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(SolverError::BadProblem("non-finite initial point".into()));
    }
    let mut x = x0.to_vec();
    let min_slack = prob.slacks(&x).into_iter().fold(T::infinity(), T::min);
    if !(min_slack > T::zero()) {
        x = barrier::phase_one(prob, settings, &x)?;
    }
    barrier::minimize(prob, settings, &x, None)
}

/// Linear program `maximize c^T x` over box bounds and inequality rows.
#[derive(Debug, Clone)]
pub struct LinearProgram<T> {
    pub objective: Vec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    /// Rows `a^T x <= b`.
    pub rows: Vec<(Vec<T>, T)>,
}

#[derive(Debug, Clone)]
pub struct LpSolution<T> {
    pub status: SolveStatus,
    pub x: Option<Vec<T>>,
    pub objective: Option<T>,
}

/// Solves the LP with the barrier core specialized to affine constraints.
/// Variables with equal bounds are substituted out first.
pub fn solve_lp<T: Real>(
    lp: &LinearProgram<T>,
    settings: &SolverSettings<T>,
) -> Result<LpSolution<T>, SolverError> {
    let n = lp.objective.len();
    if lp.lower.len() != n || lp.upper.len() != n {
        return Err(SolverError::BadProblem("bound length mismatch".into()));
    }
    for i in 0..n {
        if !lp.lower[i].is_finite() || !lp.upper[i].is_finite() {
            return Err(SolverError::BadProblem(format!("variable {i} needs finite bounds")));
        }
        if lp.lower[i] > lp.upper[i] {
            return Err(SolverError::BadProblem(format!("variable {i} has lower > upper")));
        }
    }
    // Pin variables whose box has (numerically) collapsed.
    let pin_eps = real::<T>(1e-12);
    let mut fixed: Vec<Option<T>> = Vec::with_capacity(n);
    let mut free_idx = Vec::new();
    for i in 0..n {
        let width = lp.upper[i] - lp.lower[i];
        if width <= pin_eps * T::one().max(lp.upper[i].abs()) {
            fixed.push(Some((lp.lower[i] + lp.upper[i]) * real::<T>(0.5)));
        } else {
            fixed.push(None);
            free_idx.push(i);
        }
    }
    let nf = free_idx.len();
    let fixed_obj: T = (0..n).filter_map(|i| fixed[i].map(|v| lp.objective[i] * v)).sum();
    if nf == 0 {
        // Everything pinned: feasible iff the rows accept the pinned point.
        let x: Vec<T> = fixed.iter().map(|v| v.unwrap()).collect();
        let viol = lp
            .rows
            .iter()
            .map(|(a, b)| dot(a, &x) - *b)
            .fold(T::zero(), T::max);
        if viol > settings.feasibility_tol {
            return Ok(LpSolution { status: SolveStatus::Infeasible, x: None, objective: None });
        }
        return Ok(LpSolution { status: SolveStatus::Optimal, x: Some(x), objective: Some(fixed_obj) });
    }

    let mut prob = ConvexQcqp::new(VarLayout::single(nf));
    // maximize c^T x  ->  minimize -c^T x
    for (j, &i) in free_idx.iter().enumerate() {
        prob.objective.lin[j] = -lp.objective[i];
    }
    for (a, b) in &lp.rows {
        if a.len() != n {
            return Err(SolverError::BadProblem("row length mismatch".into()));
        }
        let mut expr = QuadExpr::zero(&prob.layout);
        let mut rhs = *b;
        let mut nonzero = false;
        for (j, &i) in free_idx.iter().enumerate() {
            expr.lin[j] = a[i];
            if a[i] != T::zero() {
                nonzero = true;
            }
        }
        for i in 0..n {
            if let Some(v) = fixed[i] {
                rhs = rhs - a[i] * v;
            }
        }
        if nonzero {
            prob.add_constraint(expr, rhs);
        } else if rhs < -settings.feasibility_tol {
            return Ok(LpSolution { status: SolveStatus::Infeasible, x: None, objective: None });
        }
    }
    for (j, &i) in free_idx.iter().enumerate() {
        let mut hi = QuadExpr::zero(&prob.layout);
        hi.lin[j] = T::one();
        prob.add_constraint(hi, lp.upper[i]);
        let mut lo = QuadExpr::zero(&prob.layout);
        lo.lin[j] = -T::one();
        prob.add_constraint(lo, -lp.lower[i]);
    }
    let x0: Vec<T> = free_idx
        .iter()
        .map(|&i| (lp.lower[i] + lp.upper[i]) * real::<T>(0.5))
        .collect();
    let sol = match solve_qcqp(&prob, settings, &x0) {
        Ok(s) => s,
        Err(SolverError::InfeasibleStart) => {
            return Ok(LpSolution { status: SolveStatus::Infeasible, x: None, objective: None })
        }
        Err(e) => return Err(e),
    };
    let mut x_full = vec![T::zero(); n];
    for i in 0..n {
        if let Some(v) = fixed[i] {
            x_full[i] = v;
        }
    }
    for (j, &i) in free_idx.iter().enumerate() {
        x_full[i] = sol.x[j];
    }
    let objective = dot(&lp.objective, &x_full);
    Ok(LpSolution { status: sol.status, x: Some(x_full), objective: Some(objective) })
}

/// Residual maxima for the Karush-Kuhn-Tucker conditions at `(x, multipliers)`.
#[derive(Debug, Clone)]
pub struct KktReport<T> {
    /// `||grad f0 + sum lambda_j grad g_j||_inf`, scaled by the gradient magnitude.
    pub stationarity: T,
    /// Largest constraint violation.
    pub primal_feasibility: T,
    /// Most negative multiplier (as a positive residual).
    pub dual_feasibility: T,
    /// Largest `|lambda_j * slack_j|`, scaled by the objective magnitude.
    pub complementarity: T,
}

impl<T: Real> KktReport<T> {
    pub fn max_residual(&self) -> T {
        self.stationarity
            .max(self.primal_feasibility)
            .max(self.dual_feasibility)
            .max(self.complementarity)
    }

    pub fn passes(&self, tol: T) -> bool {
        self.max_residual() <= tol
    }
}

/// Checks stationarity, primal/dual feasibility and complementary slackness.
pub fn verify_kkt<T: Real>(
    prob: &ConvexQcqp<T>,
    x: &[T],
    multipliers: &[T],
    _tol: T,
) -> KktReport<T> {
    let n = prob.layout.total();
    let mut lagr_grad = vec![T::zero(); n];
    prob.objective.grad_acc(&prob.layout, x, T::one(), &mut lagr_grad);
    let mut f0_grad_norm = norm_inf(&lagr_grad);
    let mut primal = T::zero();
    let mut dual = T::zero();
    let mut comp = T::zero();
    let obj_scale = T::one().max(prob.objective_value(x).abs());
    for (j, c) in prob.constraints.iter().enumerate() {
        let lam = multipliers.get(j).copied().unwrap_or(T::zero());
        let g = c.expr.value(&prob.layout, x) - c.rhs;
        primal = primal.max(g);
        dual = dual.max(-lam);
        comp = comp.max((lam * g).abs() / obj_scale);
        let mut cg = vec![T::zero(); n];
        c.expr.grad_acc(&prob.layout, x, T::one(), &mut cg);
        f0_grad_norm = f0_grad_norm.max(lam.abs() * norm_inf(&cg));
        for (lg, &v) in lagr_grad.iter_mut().zip(cg.iter()) {
            *lg = *lg + lam * v;
        }
    }
    KktReport {
        stationarity: norm_inf(&lagr_grad) / T::one().max(f0_grad_norm),
        primal_feasibility: primal,
        dual_feasibility: dual,
        complementarity: comp,
    }
}

#[cfg(test)]
mod tests;
