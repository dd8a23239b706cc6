//! Builders for the per-iteration convex subproblems: reweighted l1
//! weights, the power-surrogate coefficients, the delivery-rate LP, the
//! concave minorant of the achievable rate, the precoder quadratic program
//! and the max-min feasibility program that seeds the loop.

use crate::convexsolver::{
    embed, BlockMat, ConvexQcqp, LinearProgram, LpSolution, QuadExpr, QuadTerm, SolverError,
    SolverSettings, VarLayout,
};
use crate::linalg::CMat;
use crate::model::{Association, DdrAllocation, PrecoderStack};
use crate::scenario::Scenario;
use crate::{real, Real};

/// Reweighted l1 state: per (UE, eRRH) association weights and per-eRRH
/// activity weights, with their normalizing constants.
#[derive(Debug, Clone)]
pub struct ReweightState<T> {
    /// `mu[ue][errh]`
    pub mu: Vec<Vec<T>>,
    /// `theta[errh]`
    pub theta: Vec<T>,
    pub c1: T,
    pub c2: T,
    pub tau1: T,
    pub tau2: T,
    /// Freeze the association weights at zero (all-eRRH baseline mode).
    pub pin_mu_zero: bool,
}

impl<T: Real> ReweightState<T> {
    pub fn constants(tau1: T, tau2: T, c2_literal: bool) -> (T, T) {
        let c1 = T::one() / (T::one() + T::one() / tau1).ln();
        let c2 = if c2_literal {
            T::one() / (T::one() + T::one() / (tau1 * tau1)).ln()
        } else {
            T::one() / (T::one() + T::one() / tau2).ln()
        };
        (c1, c2)
    }

    pub fn from_stack(stack: &PrecoderStack<T>, scen: &Scenario<T>, pin_mu_zero: bool) -> Self {
        let cfg = &scen.cfg;
        let (c1, c2) = Self::constants(cfg.tau1, cfg.tau2, cfg.c2_literal);
        let mut state = Self {
            mu: vec![vec![T::zero(); cfg.num_errh]; cfg.num_ue],
            theta: vec![T::zero(); cfg.num_errh],
            c1,
            c2,
            tau1: cfg.tau1,
            tau2: cfg.tau2,
            pin_mu_zero,
        };
        state.update(stack);
        state
    }

    /// Recomputes every weight from the current block energies. Weights
    /// stay strictly positive thanks to the regularizers (unless pinned).
    pub fn update(&mut self, stack: &PrecoderStack<T>) {
        for (k, row) in self.mu.iter_mut().enumerate() {
            for (i, w) in row.iter_mut().enumerate() {
                *w = if self.pin_mu_zero {
                    T::zero()
                } else {
                    self.c1 / (stack.ue_errh_energy(k, i) + self.tau1)
                };
            }
        }
        for (i, th) in self.theta.iter_mut().enumerate() {
            *th = self.c2 / (stack.errh_tx_power(i) + self.tau2);
        }
    }
}

/// Coefficients of the linearized power model at fixed weights and rates.
#[derive(Debug, Clone)]
pub struct ApproxCoefficients<T> {
    /// `upsilon[errh]`: amplifier slope plus weighted active/sleep gap.
    pub upsilon: Vec<T>,
    /// `vartheta[errh][ue]`: weighted uncached delivery rate.
    pub vartheta: Vec<Vec<T>>,
    /// `tau[errh][ue] = upsilon + alpha * vartheta`, the per-block power price.
    pub tau: Vec<Vec<T>>,
    /// `q[errh][ue]`: fronthaul power per unit delivery rate in the rate LP.
    pub q: Vec<Vec<T>>,
    /// Rate-independent power offset (sleep power plus upsilon-weighted energies).
    pub b: T,
    pub sleep_total: T,
}

/// Evaluates the power-model coefficients at the current weights, rates
/// and precoder energies.
pub fn build_coefficients<T: Real>(
    state: &ReweightState<T>,
    rates: &DdrAllocation<T>,
    scen: &Scenario<T>,
    stack: &PrecoderStack<T>,
) -> ApproxCoefficients<T> {
    let cfg = &scen.cfg;
    let p_delta = cfg.active_power - cfg.sleep_power;
    let alpha = cfg.fronthaul_slope;
    let sleep_total = cfg.sleep_power * real::<T>(cfg.num_errh as f64);
    let mut upsilon = Vec::with_capacity(cfg.num_errh);
    let mut vartheta = vec![vec![T::zero(); cfg.num_ue]; cfg.num_errh];
    let mut tau = vec![vec![T::zero(); cfg.num_ue]; cfg.num_errh];
    let mut q = vec![vec![T::zero(); cfg.num_ue]; cfg.num_errh];
    let mut b = sleep_total;
    for i in 0..cfg.num_errh {
        let ups = cfg.amplifier_slope + state.theta[i] * p_delta;
        for k in 0..cfg.num_ue {
            let mut uncached_rate = T::zero();
            let mut uncached_energy = T::zero();
            let mut energy = T::zero();
            for m in 0..cfg.subfiles_per_file {
                let e = stack.block_energy(k, m, i);
                energy = energy + e;
                if !scen.cache.is_cached(i, k, m) {
                    uncached_rate = uncached_rate + rates.get(k, m);
                    uncached_energy = uncached_energy + e;
                }
            }
            vartheta[i][k] = state.mu[k][i] * uncached_rate;
            tau[i][k] = ups + alpha * vartheta[i][k];
            q[i][k] = alpha * state.mu[k][i] * uncached_energy;
            b = b + ups * energy;
        }
        upsilon.push(ups);
    }
    ApproxCoefficients { upsilon, vartheta, tau, q, b, sleep_total }
}

impl<T: Real> ApproxCoefficients<T> {
    /// Linearized total power at the precoder energies of `stack`.
    pub fn approx_total_power(&self, stack: &PrecoderStack<T>) -> T {
        let mut p = self.sleep_total;
        for (i, row) in self.tau.iter().enumerate() {
            for (k, &t) in row.iter().enumerate() {
                p = p + t * stack.ue_errh_energy(k, i);
            }
        }
        p
    }
}

/// Inner-loop objective: the weighted transmit-power cost the precoder
/// program minimizes.
pub fn inner_objective<T: Real>(coeffs: &ApproxCoefficients<T>, stack: &PrecoderStack<T>, eta: T) -> T {
    eta * (coeffs.approx_total_power(stack) - coeffs.sleep_total)
}

/// Middle-loop objective: sum rate minus weighted linearized power.
pub fn middle_objective<T: Real>(
    coeffs: &ApproxCoefficients<T>,
    stack: &PrecoderStack<T>,
    rates: &DdrAllocation<T>,
    eta: T,
) -> T {
    rates.sum() - eta * coeffs.approx_total_power(stack)
}

/// Maps the precoder stack onto solver blocks, one block per embedded
/// complex precoder column.
#[derive(Debug, Clone, Copy)]
pub struct StackEmbedding {
    pub num_ue: usize,
    pub subfiles: usize,
    pub rows: usize,
    pub cols: usize,
}

impl StackEmbedding {
    pub fn for_scenario<T: Real>(scen: &Scenario<T>) -> Self {
        Self {
            num_ue: scen.cfg.num_ue,
            subfiles: scen.cfg.subfiles_per_file,
            rows: scen.cfg.total_tx_antennas(),
            cols: scen.cfg.streams,
        }
    }

    pub fn num_pairs(&self) -> usize {
        self.num_ue * self.subfiles
    }

    pub fn num_blocks(&self) -> usize {
        self.num_pairs() * self.cols
    }

    pub fn block_index(&self, ue: usize, subfile: usize, col: usize) -> usize {
        (ue * self.subfiles + subfile) * self.cols + col
    }

    pub fn layout(&self) -> VarLayout {
        VarLayout::new(vec![2 * self.rows; self.num_blocks()])
    }

    pub fn embed<T: Real>(&self, stack: &PrecoderStack<T>) -> Vec<T> {
        embed::embed_stack(stack.mats())
    }

    pub fn unembed_with<T: Real>(&self, x: &[T], antennas_errh: usize) -> PrecoderStack<T> {
        let n = self.num_pairs() * self.cols * 2 * self.rows;
        let mats = embed::unembed_stack(&x[..n], self.num_pairs(), self.rows, self.cols);
        PrecoderStack::from_mats(mats, self.num_ue, self.subfiles, antennas_errh)
    }
}

/// Concave minorant of one stream's achievable rate around an expansion
/// stack: exact at the expansion point, a lower bound everywhere, concave
/// quadratic in the precoders.
#[derive(Debug, Clone)]
pub struct Surrogate<T> {
    pub ue: usize,
    pub subfile: usize,
    /// Achievable rate at the expansion point, Mb/s.
    pub g0: T,
    /// Mb/s per nat: bandwidth over ln 2.
    scale: T,
    /// Pairing rows `A^H H` of the linear term, `d x N_R`.
    lin_rows: CMat<T>,
    /// Constant part of the minorant.
    const_term: T,
    /// `H^H (Xi^-1 - Phi^-1) H`, Hermitian PSD.
    quad_complex: CMat<T>,
    /// Streams whose precoders enter the quadratic term (own included).
    pub interferers: Vec<(usize, usize)>,
    /// Interference covariance needed a diagonal ridge.
    pub ridged: bool,
}

impl<T: Real> Surrogate<T> {
    /// Evaluates the minorant at an arbitrary stack (complex domain).
    pub fn value(&self, stack: &PrecoderStack<T>) -> T {
        let own = stack.get(self.ue, self.subfile);
        let lin = self.lin_rows.trace_product(own).re;
        let mut quad = T::zero();
        for &(k, m) in &self.interferers {
            let f = stack.get(k, m);
            quad = quad + f.herm().trace_product(&self.quad_complex.mul(f)).re;
        }
        self.const_term + self.scale * (real::<T>(2.0) * lin - quad)
    }
}

/// Builds the minorants of every stream around the expansion stack.
pub fn build_surrogates<T: Real>(stack: &PrecoderStack<T>, scen: &Scenario<T>) -> Vec<Surrogate<T>> {
    let cfg = &scen.cfg;
    let scale = cfg.bandwidth / real::<T>(std::f64::consts::LN_2);
    scen.pairs()
        .map(|(k, m)| {
            let h = &scen.channels.channels[k];
            let mut xi = crate::model::interference_covariance(stack, scen, k, m);
            let mut ridged = false;
            let sigma_ridge = real::<T>(1e-10) * scen.channels.noise_variance;
            while xi.cholesky().is_err() {
                for d in 0..xi.rows {
                    xi[(d, d)] = xi[(d, d)] + crate::Complex::new(sigma_ridge, T::zero());
                }
                ridged = true;
            }
            let pi0 = h.mul(stack.get(k, m));
            let mut phi0 = xi.clone();
            phi0.add_assign_scaled(&pi0.mul_herm(), T::one());
            let g0 = (scale
                * (phi0.logdet().expect("signal covariance PD") - xi.logdet().expect("ridged covariance PD")))
            .max(T::zero());
            let xi_chol = xi.cholesky().expect("ridged covariance must factor");
            // linear coefficient A = Xi^-1 Pi0; pairing rows A^H H
            let a = CMat::cholesky_solve(&xi_chol, &pi0);
            let lin_rows = a.herm().mul(h);
            // quadratic coefficient B = Xi^-1 - Phi0^-1, symmetrized
            let xi_inv = CMat::cholesky_solve(&xi_chol, &CMat::identity(xi.rows));
            let phi_inv = phi0.herm_inverse().expect("signal covariance PD");
            let b_mat = xi_inv.sub(&phi_inv).hermitian_part();
            let quad_complex = h.herm().mul(&b_mat).mul(h).hermitian_part();
            let mut interferers = Vec::new();
            for kk in 0..cfg.num_ue {
                for mm in 0..cfg.subfiles_per_file {
                    let enters = if kk == k { mm >= m } else { true };
                    if enters {
                        interferers.push((kk, mm));
                    }
                }
            }
            // constant: g0 - scale*(2 Re tr(A^H Pi0) + tr(B (Sigma - Phi0)))
            let lin_at_expansion = a.herm().trace_product(&pi0).re;
            let sigma = scen.channels.noise_covariance(cfg.antennas_ue);
            let drift = b_mat.trace_product(&sigma.sub(&phi0)).re;
            let const_term = g0 - scale * (real::<T>(2.0) * lin_at_expansion + drift);
            Surrogate { ue: k, subfile: m, g0, scale, lin_rows, const_term, quad_complex, interferers, ridged }
        })
        .collect()
}

fn errh_diag<T: Real>(n_big: usize, n_r: usize, errh: usize, v: T) -> Vec<T> {
    let mut d = vec![T::zero(); 2 * n_big];
    for r in errh * n_r..(errh + 1) * n_r {
        d[r] = v;
        d[n_big + r] = v;
    }
    d
}

/// Adds the minorant row `rate_floor + epigraph <= Gamma(F)` to `prob`:
/// `scale*quad(F) - lin(F) (+ rate_floor * t) <= const_term - rate_floor?`
/// With an epigraph variable the row reads `Gamma(F) >= rate * t`.
fn add_surrogate_row<T: Real>(
    prob: &mut ConvexQcqp<T>,
    emb: &StackEmbedding,
    surr: &Surrogate<T>,
    rate: T,
    epigraph_t: Option<usize>,
) {
    let two = real::<T>(2.0);
    let quad_embedded = embed::embed_hermitian_form(&surr.quad_complex.scale(two * surr.scale));
    let mut expr = QuadExpr::zero(&prob.layout);
    for &(kk, mm) in &surr.interferers {
        for col in 0..emb.cols {
            expr.quads.push(QuadTerm {
                block: emb.block_index(kk, mm, col),
                mat: BlockMat::Dense(quad_embedded.clone()),
            });
        }
    }
    // linear part: -2*scale*Re tr((A^H H) F) over the stream's own columns
    for col in 0..emb.cols {
        let block = emb.block_index(surr.ue, surr.subfile, col);
        let row: Vec<crate::Complex<T>> = (0..emb.rows).map(|r| surr.lin_rows[(col, r)]).collect();
        let lin = embed::embed_pairing_row(&row);
        let range = prob.layout.range(block);
        for (offset, v) in lin.into_iter().enumerate() {
            expr.lin[range.start + offset] = -two * surr.scale * v;
        }
    }
    match epigraph_t {
        None => prob.add_constraint(expr, surr.const_term - rate),
        Some(t_idx) => {
            expr.lin[t_idx] = rate;
            prob.add_constraint(expr, surr.const_term);
        }
    }
}

fn power_budget_rows<T: Real>(prob: &mut ConvexQcqp<T>, emb: &StackEmbedding, scen: &Scenario<T>) {
    let cfg = &scen.cfg;
    let two = real::<T>(2.0);
    for i in 0..cfg.num_errh {
        let mut expr = QuadExpr::zero(&prob.layout);
        for k in 0..cfg.num_ue {
            for m in 0..cfg.subfiles_per_file {
                for col in 0..emb.cols {
                    expr.quads.push(QuadTerm {
                        block: emb.block_index(k, m, col),
                        mat: BlockMat::Diag(errh_diag(emb.rows, cfg.antennas_errh, i, two)),
                    });
                }
            }
        }
        prob.add_constraint(expr, cfg.tx_power_budget[i]);
    }
}

fn weighted_fronthaul_rows<T: Real>(
    prob: &mut ConvexQcqp<T>,
    emb: &StackEmbedding,
    scen: &Scenario<T>,
    coeffs: &ApproxCoefficients<T>,
) {
    let cfg = &scen.cfg;
    let two = real::<T>(2.0);
    for i in 0..cfg.num_errh {
        if coeffs.vartheta[i].iter().all(|v| *v == T::zero()) {
            continue; // vacuous row
        }
        let mut expr = QuadExpr::zero(&prob.layout);
        for k in 0..cfg.num_ue {
            let w = coeffs.vartheta[i][k];
            if w == T::zero() {
                continue;
            }
            for m in 0..cfg.subfiles_per_file {
                for col in 0..emb.cols {
                    expr.quads.push(QuadTerm {
                        block: emb.block_index(k, m, col),
                        mat: BlockMat::Diag(errh_diag(emb.rows, cfg.antennas_errh, i, two * w)),
                    });
                }
            }
        }
        prob.add_constraint(expr, cfg.fronthaul_capacity[i]);
    }
}

/// Convex quadratic program of one precoder update: minimize the weighted
/// transmit power subject to weighted fronthaul rows, minorant rate rows
/// and per-eRRH power budgets.
pub fn build_precoder_qcqp<T: Real>(
    surrogates: &[Surrogate<T>],
    coeffs: &ApproxCoefficients<T>,
    rates: &DdrAllocation<T>,
    scen: &Scenario<T>,
    settings: &SolverSettings<T>,
) -> Result<(ConvexQcqp<T>, StackEmbedding), SolverError> {
    let cfg = &scen.cfg;
    let emb = StackEmbedding::for_scenario(scen);
    let mut prob = ConvexQcqp::new(emb.layout());
    let two = real::<T>(2.0);
    // objective: eta * sum_i tau[i][k] * block energy
    for k in 0..cfg.num_ue {
        for m in 0..cfg.subfiles_per_file {
            for col in 0..emb.cols {
                let mut diag = vec![T::zero(); 2 * emb.rows];
                for i in 0..cfg.num_errh {
                    let v = two * cfg.eta * coeffs.tau[i][k];
                    for r in i * cfg.antennas_errh..(i + 1) * cfg.antennas_errh {
                        diag[r] = v;
                        diag[emb.rows + r] = v;
                    }
                }
                prob.objective.quads.push(QuadTerm {
                    block: emb.block_index(k, m, col),
                    mat: BlockMat::Diag(diag),
                });
            }
        }
    }
    weighted_fronthaul_rows(&mut prob, &emb, scen, coeffs);
    for surr in surrogates {
        add_surrogate_row(&mut prob, &emb, surr, rates.get(surr.ue, surr.subfile), None);
    }
    power_budget_rows(&mut prob, &emb, scen);
    prob.validate_psd(settings.psd_ridge)?;
    Ok((prob, emb))
}

/// Concave max-min program used to find an initial feasible point: an
/// epigraph variable under every minorant-to-rate ratio, with the same
/// fronthaul and power rows as the precoder program.
pub fn build_feasibility_qcqp<T: Real>(
    surrogates: &[Surrogate<T>],
    coeffs: &ApproxCoefficients<T>,
    rates: &DdrAllocation<T>,
    scen: &Scenario<T>,
    settings: &SolverSettings<T>,
) -> Result<(ConvexQcqp<T>, StackEmbedding, usize), SolverError> {
    let emb = StackEmbedding::for_scenario(scen);
    let mut layout = emb.layout();
    layout.push_block(1);
    let t_idx = layout.total() - 1;
    let mut prob = ConvexQcqp::new(layout);
    // maximize t
    prob.objective.lin[t_idx] = -T::one();
    for surr in surrogates {
        add_surrogate_row(&mut prob, &emb, surr, rates.get(surr.ue, surr.subfile), Some(t_idx));
    }
    weighted_fronthaul_rows(&mut prob, &emb, scen, coeffs);
    power_budget_rows(&mut prob, &emb, scen);
    prob.validate_psd(settings.psd_ridge)?;
    Ok((prob, emb, t_idx))
}

/// Outcome of one delivery-rate LP.
#[derive(Debug, Clone)]
pub struct RateLpOutcome<T> {
    pub rates: DdrAllocation<T>,
    pub objective: T,
    /// Streams whose channel bound fell below the QoS floor and were pinned
    /// to the channel bound instead.
    pub clamped: Vec<(usize, usize)>,
}

/// Solves the delivery-rate subproblem at fixed precoders: maximize the
/// sum rate minus the weighted linearized fronthaul power, over the QoS
/// box, the per-stream achievable-rate caps and three per-eRRH fronthaul
/// row families (the weighted-l1 power surrogate, the current binary
/// association, and the energy-weighted form the precoder program will
/// re-impose, so alternation stays feasible).
pub fn solve_rate_lp<T: Real>(
    scen: &Scenario<T>,
    coeffs: &ApproxCoefficients<T>,
    weights: &ReweightState<T>,
    stack: &PrecoderStack<T>,
    g_values: &[T],
    assoc_rows: &Association,
    settings: &SolverSettings<T>,
) -> Result<RateLpOutcome<T>, SolverError> {
    let cfg = &scen.cfg;
    let n = scen.num_pairs();
    assert_eq!(g_values.len(), n);
    let mut objective = vec![T::zero(); n];
    let mut lower = vec![T::zero(); n];
    let mut upper = vec![T::zero(); n];
    let mut clamped = Vec::new();
    for (k, m) in scen.pairs() {
        let idx = k * cfg.subfiles_per_file + m;
        let q_total: T = (0..cfg.num_errh).map(|i| coeffs.q[i][k]).sum();
        objective[idx] = T::one() - cfg.eta * q_total;
        // stay a sliver inside the channel bound so the precoder program's
        // warm start keeps a workable barrier slack
        let strict = T::one() - real::<T>(1e-4);
        let cap = cfg.subfile_rate_cap.min(g_values[idx] * strict);
        if cap < cfg.qos_rate {
            clamped.push((k, m));
            lower[idx] = cap.max(T::zero());
            upper[idx] = cap.max(T::zero());
        } else {
            lower[idx] = cfg.qos_rate;
            upper[idx] = cap;
        }
    }
    let mut rows = Vec::new();
    for i in 0..cfg.num_errh {
        // weighted-l1 surrogate row (power-model coefficients)
        let mut a = vec![T::zero(); n];
        let mut any = false;
        for (k, m) in scen.pairs() {
            let v = coeffs.q[i][k];
            if v > T::zero() {
                a[k * cfg.subfiles_per_file + m] = v;
                any = true;
            }
        }
        if any {
            rows.push((a, cfg.fronthaul_capacity[i]));
        }
        // binary association row: the capacity constraint as evaluated
        let mut a = vec![T::zero(); n];
        let mut any = false;
        for (k, m) in scen.pairs() {
            if assoc_rows.serves(k, i) && !scen.cache.is_cached(i, k, m) {
                a[k * cfg.subfiles_per_file + m] = T::one();
                any = true;
            }
        }
        if any {
            rows.push((a, cfg.fronthaul_capacity[i]));
        }
        // energy-weighted row matching the precoder program's fronthaul
        // constraint at the current stack
        let mut a = vec![T::zero(); n];
        let mut any = false;
        for (k, m) in scen.pairs() {
            if !scen.cache.is_cached(i, k, m) {
                let v = weights.mu[k][i] * stack.ue_errh_energy(k, i);
                if v > T::zero() {
                    a[k * cfg.subfiles_per_file + m] = v;
                    any = true;
                }
            }
        }
        if any {
            rows.push((a, cfg.fronthaul_capacity[i]));
        }
    }
    let lp = LinearProgram { objective, lower, upper, rows };
    let sol: LpSolution<T> = crate::convexsolver::solve_lp(&lp, settings)?;
    let Some(x) = sol.x else {
        return Err(SolverError::InfeasibleStart);
    };
    let rates = DdrAllocation { rates: x, subfiles: cfg.subfiles_per_file };
    let objective = rates.sum()
        - cfg.eta
            * (coeffs.b
                + (0..cfg.num_errh)
                    .map(|i| {
                        (0..cfg.num_ue)
                            .map(|k| {
                                coeffs.q[i][k]
                                    * (0..cfg.subfiles_per_file).map(|m| rates.get(k, m)).sum::<T>()
                            })
                            .sum::<T>()
                    })
                    .sum::<T>());
    Ok(RateLpOutcome { rates, objective, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{all_rates, association_from_precoders};
    use crate::scenario::{build_scenario, ScenarioConfig};
    use crate::Complex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn default_scenario() -> Scenario<f64> {
        build_scenario(&ScenarioConfig::default()).unwrap()
    }

    fn random_stack(scen: &Scenario<f64>, scale: f64, seed: u64) -> PrecoderStack<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = &scen.cfg;
        let mats = (0..scen.num_pairs())
            .map(|_| {
                CMat::from_fn(cfg.total_tx_antennas(), cfg.streams, |_, _| {
                    Complex::new(scale * rng.gen_range(-1.0..1.0), scale * rng.gen_range(-1.0..1.0))
                })
            })
            .collect();
        PrecoderStack::from_mats(mats, cfg.num_ue, cfg.subfiles_per_file, cfg.antennas_errh)
    }

    #[test]
    fn zero_energy_weight_hits_regularized_ceiling() {
        let scen = default_scenario();
        let stack = PrecoderStack::<f64>::zeros(3, 2, 7, 5, 2);
        let state = ReweightState::from_stack(&stack, &scen, false);
        // c1 = 1/ln(1+1e5), mu = c1/tau1
        let c1 = 1.0 / (1.0 + 1e5f64).ln();
        assert!((state.c1 - c1).abs() < 1e-15);
        assert!((c1 - 0.0868588209).abs() < 1e-9);
        for row in &state.mu {
            for &mu in row {
                assert!((mu - 8685.882).abs() < 0.01, "{mu}");
            }
        }
    }

    #[test]
    fn strong_links_get_vanishing_weights() {
        let scen = default_scenario();
        let mut stack = PrecoderStack::<f64>::zeros(3, 2, 7, 5, 2);
        stack.get_mut(0, 0)[(0, 0)] = Complex::new(0.5, 0.0); // energy 0.25 >> tau1
        let state = ReweightState::from_stack(&stack, &scen, false);
        let approx = state.c1 / 0.25;
        assert!((state.mu[0][0] - approx).abs() < approx * 1e-4);
        assert!(state.mu[0][0] < 1.0);
    }

    #[test]
    fn doubling_precoders_strictly_decreases_weights() {
        let scen = default_scenario();
        let stack = random_stack(&scen, 0.05, 3);
        let state = ReweightState::from_stack(&stack, &scen, false);
        let mut doubled_mats = Vec::new();
        for m in stack.mats() {
            doubled_mats.push(m.scale(2.0));
        }
        let doubled = PrecoderStack::from_mats(doubled_mats, 3, 2, 5);
        let state2 = ReweightState::from_stack(&doubled, &scen, false);
        for k in 0..3 {
            for i in 0..7 {
                assert!(state2.mu[k][i] < state.mu[k][i]);
            }
        }
        for i in 0..7 {
            assert!(state2.theta[i] < state.theta[i]);
        }
    }

    #[test]
    fn weights_stay_positive() {
        let scen = default_scenario();
        for seed in 0..5 {
            let stack = random_stack(&scen, 10f64.powi(-(seed as i32)), seed);
            let state = ReweightState::from_stack(&stack, &scen, false);
            assert!(state.mu.iter().flatten().all(|&m| m > 0.0));
            assert!(state.theta.iter().all(|&t| t > 0.0));
        }
    }

    #[test]
    fn c2_literal_switch_changes_constant() {
        let (c1, c2_default) = ReweightState::<f64>::constants(1e-5, 1e-3, false);
        let (_, c2_literal) = ReweightState::<f64>::constants(1e-5, 1e-3, true);
        assert!((c2_default - 1.0 / (1.0 + 1e3f64).ln()).abs() < 1e-15);
        assert!((c2_literal - 1.0 / (1.0 + 1e10f64).ln()).abs() < 1e-15);
        assert!(c1 > 0.0 && c2_default > 0.0 && c2_literal > 0.0);
    }

    #[test]
    fn full_cache_zeroes_fronthaul_coefficients() {
        let mut cfg = ScenarioConfig::<f64>::default();
        cfg.cache_fraction = 1.0;
        let scen = build_scenario(&cfg).unwrap();
        let stack = random_stack(&scen, 0.05, 4);
        let state = ReweightState::from_stack(&stack, &scen, false);
        let rates = DdrAllocation::uniform(3, 2, 10.0);
        let coeffs = build_coefficients(&state, &rates, &scen, &stack);
        assert!(coeffs.vartheta.iter().flatten().all(|&v| v == 0.0));
        assert!(coeffs.q.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn tau_reduces_to_amplifier_slope_without_weights() {
        let mut cfg = ScenarioConfig::<f64>::default();
        cfg.fronthaul_slope = 0.0;
        let scen = build_scenario(&cfg).unwrap();
        let stack = random_stack(&scen, 0.05, 5);
        let mut state = ReweightState::from_stack(&stack, &scen, false);
        for th in state.theta.iter_mut() {
            *th = 0.0;
        }
        let rates = DdrAllocation::uniform(3, 2, 10.0);
        let coeffs = build_coefficients(&state, &rates, &scen, &stack);
        for row in &coeffs.tau {
            for &t in row {
                assert!((t - 2.8).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn linearized_power_matches_independent_recomposition() {
        let scen = default_scenario();
        let stack = random_stack(&scen, 0.05, 6);
        let state = ReweightState::from_stack(&stack, &scen, false);
        let rates = DdrAllocation::uniform(3, 2, 17.0);
        let coeffs = build_coefficients(&state, &rates, &scen, &stack);
        let p = coeffs.approx_total_power(&stack);
        // independent recomposition from the raw weights
        let mut oracle = 7.0 * 56.0;
        for i in 0..7 {
            let ups = 2.8 + state.theta[i] * (84.0 - 56.0);
            for k in 0..3 {
                let mut uncached = 0.0;
                let mut energy = 0.0;
                for m in 0..2 {
                    if !scen.cache.is_cached(i, k, m) {
                        uncached += rates.get(k, m);
                    }
                    energy += stack.block_energy(k, m, i);
                }
                oracle += (ups + 5.0 * state.mu[k][i] * uncached) * energy;
            }
        }
        assert!((p - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()), "{p} vs {oracle}");
    }

    #[test]
    fn rate_lp_saturates_at_cap_when_unconstrained() {
        let mut cfg = ScenarioConfig::<f64>::default();
        cfg.eta = 0.0;
        cfg.cache_fraction = 1.0; // no fronthaul rows
        let scen = build_scenario(&cfg).unwrap();
        let stack = random_stack(&scen, 0.05, 7);
        let state = ReweightState::from_stack(&stack, &scen, false);
        let rates0 = DdrAllocation::uniform(3, 2, 0.1);
        let coeffs = build_coefficients(&state, &rates0, &scen, &stack);
        let g = vec![1000.0; 6];
        let assoc = association_from_precoders(&stack, scen.cfg.assoc_threshold);
        let out = solve_rate_lp(&scen, &coeffs, &state, &stack, &g, &assoc, &SolverSettings::default()).unwrap();
        for (k, m) in scen.pairs() {
            assert!((out.rates.get(k, m) - 40.0).abs() < 1e-5);
        }
    }

    #[test]
    fn negative_net_coefficient_pins_rate_to_floor() {
        let mut cfg = ScenarioConfig::<f64>::default();
        cfg.eta = 1.0; // strong power weighting
        cfg.cache_fraction = 0.0;
        let scen = build_scenario(&cfg).unwrap();
        let stack = random_stack(&scen, 0.2, 8);
        let state = ReweightState::from_stack(&stack, &scen, false);
        let rates0 = DdrAllocation::uniform(3, 2, 0.1);
        let coeffs = build_coefficients(&state, &rates0, &scen, &stack);
        // verify at least one stream has a negative net objective coefficient
        let neg: Vec<usize> = (0..3)
            .filter(|&k| 1.0 - cfg.eta * (0..7).map(|i| coeffs.q[i][k]).sum::<f64>() < 0.0)
            .collect();
        assert!(!neg.is_empty(), "test setup should produce a negative coefficient");
        let g = vec![1000.0; 6];
        let assoc = Association { served: vec![vec![false; 7]; 3] }; // keep binary rows out
        let out = solve_rate_lp(&scen, &coeffs, &state, &stack, &g, &assoc, &SolverSettings::default()).unwrap();
        for &k in &neg {
            for m in 0..2 {
                assert!((out.rates.get(k, m) - 0.1).abs() < 1e-6, "rate {}", out.rates.get(k, m));
            }
        }
    }

    #[test]
    fn rate_lp_respects_binary_fronthaul_rows() {
        let mut cfg = ScenarioConfig::<f64>::default();
        cfg.eta = 0.0;
        cfg.cache_fraction = 0.0; // everything fetched
        let scen = build_scenario(&cfg).unwrap();
        let stack = random_stack(&scen, 0.05, 9);
        let state = ReweightState::from_stack(&stack, &scen, false);
        let rates0 = DdrAllocation::uniform(3, 2, 0.1);
        let coeffs = build_coefficients(&state, &rates0, &scen, &stack);
        let g = vec![1000.0; 6];
        let assoc = Association::all_ones(3, 7);
        let out = solve_rate_lp(&scen, &coeffs, &state, &stack, &g, &assoc, &SolverSettings::default()).unwrap();
        // every eRRH serves every UE with empty caches: total <= 50
        assert!(out.rates.sum() <= 50.0 + 1e-6, "sum {}", out.rates.sum());
        assert!(out.rates.sum() > 49.0, "capacity should bind, got {}", out.rates.sum());
    }

    #[test]
    fn channel_bound_below_qos_gets_clamped() {
        let mut cfg = ScenarioConfig::<f64>::default();
        cfg.eta = 0.0;
        cfg.cache_fraction = 1.0;
        let scen = build_scenario(&cfg).unwrap();
        let stack = random_stack(&scen, 0.05, 10);
        let state = ReweightState::from_stack(&stack, &scen, false);
        let rates0 = DdrAllocation::uniform(3, 2, 0.1);
        let coeffs = build_coefficients(&state, &rates0, &scen, &stack);
        let mut g = vec![1000.0; 6];
        g[0] = 0.05; // below the 0.1 QoS floor
        let assoc = association_from_precoders(&stack, scen.cfg.assoc_threshold);
        let out = solve_rate_lp(&scen, &coeffs, &state, &stack, &g, &assoc, &SolverSettings::default()).unwrap();
        assert_eq!(out.clamped, vec![(0, 0)]);
        assert!((out.rates.get(0, 0) - 0.05).abs() < 1e-5);
    }

    #[test]
    fn surrogate_is_tight_at_expansion_point() {
        let scen = default_scenario();
        for seed in 0..5 {
            let stack = random_stack(&scen, 0.05, 20 + seed);
            let surrogates = build_surrogates(&stack, &scen);
            let g = all_rates(&stack, &scen);
            for s in &surrogates {
                let idx = s.ue * 2 + s.subfile;
                assert!((s.g0 - g[idx]).abs() <= 1e-8 * (1.0 + g[idx]), "g0 mismatch");
                let at_expansion = s.value(&stack);
                assert!(
                    (at_expansion - g[idx]).abs() <= 1e-8 * (1.0 + g[idx].abs()),
                    "minorant not tight: {} vs {}",
                    at_expansion,
                    g[idx]
                );
            }
        }
    }

    #[test]
    fn surrogate_is_a_lower_bound_on_perturbed_stacks() {
        let scen = default_scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let stack = random_stack(&scen, 0.05, 30);
        let surrogates = build_surrogates(&stack, &scen);
        for _ in 0..50 {
            let mut mats = Vec::new();
            for m in stack.mats() {
                let noise = CMat::from_fn(m.rows, m.cols, |_, _| {
                    Complex::new(0.01 * rng.gen_range(-1.0..1.0), 0.01 * rng.gen_range(-1.0..1.0))
                });
                let mut p = m.clone();
                p.add_assign_scaled(&noise, 1.0);
                mats.push(p);
            }
            let perturbed = PrecoderStack::from_mats(mats, 3, 2, 5);
            let g = all_rates(&perturbed, &scen);
            for s in &surrogates {
                let idx = s.ue * 2 + s.subfile;
                assert!(
                    s.value(&perturbed) <= g[idx] + 1e-8 * (1.0 + g[idx].abs()),
                    "minorant exceeded the rate"
                );
            }
        }
    }

    #[test]
    fn zero_expansion_stack_gives_degenerate_minorant() {
        let scen = default_scenario();
        let zero = PrecoderStack::<f64>::zeros(3, 2, 7, 5, 2);
        let surrogates = build_surrogates(&zero, &scen);
        let probe = random_stack(&scen, 0.05, 31);
        for s in &surrogates {
            assert_eq!(s.g0, 0.0);
            // with a zero expansion point the quadratic coefficient vanishes
            // and the minorant is identically zero
            assert!(s.value(&probe).abs() < 1e-9);
        }
    }

    #[test]
    fn embedded_qcqp_objective_matches_complex_evaluation() {
        let scen = default_scenario();
        let stack = random_stack(&scen, 0.05, 32);
        let state = ReweightState::from_stack(&stack, &scen, false);
        let rates = DdrAllocation::uniform(3, 2, 5.0);
        let coeffs = build_coefficients(&state, &rates, &scen, &stack);
        let surrogates = build_surrogates(&stack, &scen);
        let settings = SolverSettings::default();
        let (prob, emb) = build_precoder_qcqp(&surrogates, &coeffs, &rates, &scen, &settings).unwrap();
        let x = emb.embed(&stack);
        let embedded = prob.objective_value(&x);
        let complex = inner_objective(&coeffs, &stack, scen.cfg.eta);
        assert!(
            (embedded - complex).abs() <= 1e-10 * (1.0 + complex.abs()),
            "{embedded} vs {complex}"
        );
        // and the minorant rows evaluate identically
        for (j, s) in surrogates.iter().enumerate() {
            let row_value = prob.constraint_value(j + row_offset(&prob, &scen), &x);
            let gamma = s.value(&stack);
            let rhs_form = s.const_term - rates.get(s.ue, s.subfile);
            let expect = (rates.get(s.ue, s.subfile) - gamma) + rhs_form;
            assert!(
                (row_value - expect).abs() <= 1e-8 * (1.0 + expect.abs()),
                "row {row_value} vs {expect}"
            );
        }
    }

    // minorant rows start after the weighted fronthaul rows
    fn row_offset(prob: &ConvexQcqp<f64>, scen: &Scenario<f64>) -> usize {
        prob.constraints.len() - scen.num_pairs() - scen.cfg.num_errh
    }

    #[test]
    fn full_cache_omits_fronthaul_rows() {
        let mut cfg = ScenarioConfig::<f64>::default();
        cfg.cache_fraction = 1.0;
        let scen = build_scenario(&cfg).unwrap();
        let stack = random_stack(&scen, 0.05, 33);
        let state = ReweightState::from_stack(&stack, &scen, false);
        let rates = DdrAllocation::uniform(3, 2, 5.0);
        let coeffs = build_coefficients(&state, &rates, &scen, &stack);
        let surrogates = build_surrogates(&stack, &scen);
        let settings = SolverSettings::default();
        let (prob, _) = build_precoder_qcqp(&surrogates, &coeffs, &rates, &scen, &settings).unwrap();
        // rows: 6 minorant + 7 power budgets, no fronthaul rows
        assert_eq!(prob.constraints.len(), 6 + 7);
    }

    #[test]
    fn feasibility_ratio_halves_when_rates_double() {
        let scen = default_scenario();
        let stack = random_stack(&scen, 0.05, 34);
        let surrogates = build_surrogates(&stack, &scen);
        let rates = DdrAllocation::uniform(3, 2, 4.0);
        let ratio = |r: &DdrAllocation<f64>| -> f64 {
            surrogates
                .iter()
                .map(|s| s.value(&stack) / r.get(s.ue, s.subfile))
                .fold(f64::INFINITY, f64::min)
        };
        let t1 = ratio(&rates);
        let doubled = DdrAllocation::uniform(3, 2, 8.0);
        let t2 = ratio(&doubled);
        assert!((t2 - t1 / 2.0).abs() < 1e-9 * (1.0 + t1.abs()));
    }
}
