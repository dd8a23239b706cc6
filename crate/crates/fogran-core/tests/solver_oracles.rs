//! Solver results checked against independent oracles: exhaustive vertex
//! enumeration for LPs, and the multi-start penalty method for QCQPs,
//! including the tiny end-to-end precoder and feasibility programs.

mod common;

use common::{
    lp_vertex_enumeration, qcqp_penalty_oracle, qcqp_random_search, random_bounded_lp,
    scatter_starts,
};
use fogran_core::convexsolver::{solve_lp, solve_qcqp, SolveStatus, SolverSettings};
use fogran_core::model::{all_rates, DdrAllocation, PrecoderStack};
use fogran_core::scenario::{build_scenario, Scenario, ScenarioConfig};
use fogran_core::subproblems::{
    build_coefficients, build_feasibility_qcqp, build_precoder_qcqp, build_surrogates,
    ReweightState,
};
use fogran_core::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn lp_matches_vertex_enumeration_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let settings = SolverSettings::default();
    for case in 0..50 {
        let n = 2 + (case % 5); // 2..=6 variables
        let lp = random_bounded_lp(&mut rng, n, 2 + case % 4);
        let solved = solve_lp(&lp, &settings).unwrap();
        assert_eq!(solved.status, SolveStatus::Optimal, "case {case}");
        let (_, oracle_value) = lp_vertex_enumeration(&lp).expect("bounded feasible LP has a vertex");
        let got = solved.objective.unwrap();
        assert!(
            (got - oracle_value).abs() <= 1e-6 * (1.0 + oracle_value.abs()),
            "case {case}: solver {got} vs oracle {oracle_value}"
        );
    }
}

/// Tiny world per the smallest meaningful configuration: two single-antenna
/// eRRHs, one single-antenna UE, one stream, one subfile.
fn tiny_scenario(seed: u64) -> Scenario<f64> {
    let mut cfg = ScenarioConfig::<f64>::default();
    cfg.num_errh = 2;
    cfg.num_ue = 1;
    cfg.antennas_errh = 1;
    cfg.antennas_ue = 1;
    cfg.streams = 1;
    cfg.subfiles_per_file = 1;
    cfg.file_size = 40.0;
    cfg.errh_positions = Some(vec![(0.0, 0.0), (0.3, 0.0)]);
    cfg.fronthaul_capacity = vec![50.0; 2];
    cfg.tx_power_budget = vec![0.25; 2];
    cfg.cache_fraction = 0.0;
    cfg.eta = 1e-3;
    cfg.rng_seed = seed;
    build_scenario(&cfg).unwrap()
}

fn tiny_stack(_scen: &Scenario<f64>, seed: u64) -> PrecoderStack<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mats = vec![fogran_core::linalg::CMat::from_fn(2, 1, |_, _| {
        Complex::new(0.2 * rng.gen_range(-1.0..1.0), 0.2 * rng.gen_range(-1.0..1.0))
    })];
    PrecoderStack::from_mats(mats, 1, 1, 1)
}

#[test]
fn tiny_precoder_program_matches_penalty_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let settings = SolverSettings::default();
    for seed in 0..4 {
        let scen = tiny_scenario(seed);
        let stack = tiny_stack(&scen, seed + 10);
        let weights = ReweightState::from_stack(&stack, &scen, false);
        let g = all_rates(&stack, &scen);
        let rates = DdrAllocation { rates: vec![(g[0] * 0.5).max(0.1)], subfiles: 1 };
        let coeffs = build_coefficients(&weights, &rates, &scen, &stack);
        let surrogates = build_surrogates(&stack, &scen);
        let (prob, emb) = build_precoder_qcqp(&surrogates, &coeffs, &rates, &scen, &settings).unwrap();
        let x0 = emb.embed(&stack);
        let sol = solve_qcqp(&prob, &settings, &x0).unwrap();
        // per-eRRH power budgets of 0.25 W bound every coordinate by 0.5
        let lo = vec![-0.5; 4];
        let hi = vec![0.5; 4];
        let (_, brute) = qcqp_random_search(&prob, &mut rng, &lo, &hi, 1_000_000, Some(&x0));
        assert!(
            (sol.objective - brute).abs() <= 1e-3,
            "seed {seed}: solver {} vs random search {brute}",
            sol.objective
        );
        // brute force can only sit above the true optimum
        assert!(sol.objective <= brute + 1e-9);
    }
}

#[test]
fn tiny_feasibility_program_matches_penalty_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let settings = SolverSettings::default();
    for seed in 0..4 {
        let scen = tiny_scenario(seed + 40);
        let stack = tiny_stack(&scen, seed + 50);
        let weights = ReweightState::from_stack(&stack, &scen, false);
        let g = all_rates(&stack, &scen);
        let rates = DdrAllocation { rates: vec![(g[0] * 0.8).max(0.1)], subfiles: 1 };
        let coeffs = build_coefficients(&weights, &rates, &scen, &stack);
        let surrogates = build_surrogates(&stack, &scen);
        let (prob, emb, _t_idx) =
            build_feasibility_qcqp(&surrogates, &coeffs, &rates, &scen, &settings).unwrap();
        let mut x0 = emb.embed(&stack);
        let t0 = g[0] / rates.rates[0] * 0.9;
        x0.push(t0);
        let sol = solve_qcqp(&prob, &settings, &x0).unwrap();
        // an interference- and budget-free rate bound caps the ratio
        let h = &scen.channels.channels[0];
        let cap = scen.cfg.bandwidth
            * (1.0 + 0.5 * h.frob_sq() / scen.channels.noise_variance).log2();
        let t_hi = cap / rates.rates[0];
        let mut lo = vec![-0.5; 5];
        let mut hi = vec![0.5; 5];
        lo[4] = 0.0;
        hi[4] = t_hi;
        let (_, brute) = qcqp_random_search(&prob, &mut rng, &lo, &hi, 1_000_000, Some(&x0));
        // objective is -t, so smaller means a larger ratio
        assert!(
            (sol.objective - brute).abs() <= 1e-3 * (1.0 + brute.abs()),
            "seed {seed}: solver {} vs random search {brute}",
            sol.objective
        );
        assert!(sol.objective <= brute + 1e-9);
    }
}

#[test]
fn random_block_qcqp_matches_penalty_oracle() {
    use fogran_core::convexsolver::{BlockMat, ConvexQcqp, QuadExpr, QuadTerm, VarLayout};
    use fogran_core::linalg::RMat;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let settings = SolverSettings::default();
    for case in 0..6 {
        let n = 6;
        let layout = VarLayout::new(vec![3, 3]);
        let mut prob = ConvexQcqp::new(layout);
        for b in 0..2 {
            let raw = RMat::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
            let mut psd = RMat::zeros(3, 3);
            for r in 0..3 {
                for c in 0..3 {
                    let mut acc = 0.0;
                    for k in 0..3 {
                        acc += raw[(r, k)] * raw[(c, k)];
                    }
                    psd[(r, c)] = acc;
                }
            }
            psd.add_diag(0.3);
            prob.objective.quads.push(QuadTerm { block: b, mat: BlockMat::Dense(psd) });
        }
        for i in 0..n {
            prob.objective.lin[i] = rng.gen_range(-1.0..1.0);
        }
        // two coupled ball constraints
        for _ in 0..2 {
            let mut expr = QuadExpr::zero(&prob.layout);
            for b in 0..2 {
                expr.quads.push(QuadTerm {
                    block: b,
                    mat: BlockMat::Diag(vec![2.0; 3]),
                });
            }
            let center: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect();
            for i in 0..n {
                expr.lin[i] = -2.0 * center[i];
            }
            let c2: f64 = center.iter().map(|c| c * c).sum();
            prob.add_constraint(expr, 2.0 - c2);
        }
        let x0 = vec![0.0; n];
        let sol = solve_qcqp(&prob, &settings, &x0).unwrap();
        let starts = scatter_starts(&mut rng, &x0, 10, 0.5);
        let (_, oracle) = qcqp_penalty_oracle(&prob, &starts);
        assert!(
            (sol.objective - oracle).abs() <= 1e-4 * (1.0 + oracle.abs()),
            "case {case}: solver {} vs oracle {oracle}",
            sol.objective
        );
    }
}
