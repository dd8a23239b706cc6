use super::*;
use crate::linalg::RMat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn settings() -> SolverSettings<f64> {
    SolverSettings::default()
}

fn ball_constraint(n: usize, center: &[f64], radius: f64, layout: &VarLayout) -> (QuadExpr<f64>, f64) {
    // |x - c|^2 <= r^2  ->  1/2 x' (2I) x - 2c'x <= r^2 - |c|^2
    let mut expr = QuadExpr::zero(layout);
    expr.quads.push(QuadTerm { block: 0, mat: BlockMat::Dense(RMat::from_fn(n, n, |r, c| if r == c { 2.0 } else { 0.0 })) });
    for i in 0..n {
        expr.lin[i] = -2.0 * center[i];
    }
    let c2: f64 = center.iter().map(|c| c * c).sum();
    (expr, radius * radius - c2)
}

#[test]
fn lp_single_variable_hits_upper_bound() {
    let lp = LinearProgram {
        objective: vec![1.0],
        lower: vec![0.0],
        upper: vec![3.0],
        rows: vec![],
    };
    let sol = solve_lp(&lp, &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.x.unwrap()[0] - 3.0).abs() < 1e-7);
    assert!((sol.objective.unwrap() - 3.0).abs() < 1e-7);
}

#[test]
fn lp_negative_costs_sit_at_lower_bounds() {
    let lp = LinearProgram {
        objective: vec![-1.0, -2.5, -0.1],
        lower: vec![-1.0, 0.5, 2.0],
        upper: vec![4.0, 2.0, 9.0],
        rows: vec![],
    };
    let sol = solve_lp(&lp, &settings()).unwrap();
    let x = sol.x.unwrap();
    for (xi, lo) in x.iter().zip(lp.lower.iter()) {
        assert!((xi - lo).abs() < 1e-7, "{xi} should sit at {lo}");
    }
}

#[test]
fn lp_reports_infeasible() {
    let lp = LinearProgram {
        objective: vec![1.0],
        lower: vec![0.0],
        upper: vec![1.0],
        rows: vec![(vec![1.0], -1.0)], // x <= -1 against x >= 0
    };
    let sol = solve_lp(&lp, &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible);
    assert!(sol.x.is_none());
}

#[test]
fn lp_with_pinned_variables() {
    let lp = LinearProgram {
        objective: vec![1.0, 1.0],
        lower: vec![2.0, 0.0],
        upper: vec![2.0, 5.0],
        rows: vec![(vec![1.0, 1.0], 6.0)],
    };
    let sol = solve_lp(&lp, &settings()).unwrap();
    let x = sol.x.unwrap();
    assert!((x[0] - 2.0).abs() < 1e-9);
    assert!((x[1] - 4.0).abs() < 1e-6);
}

#[test]
fn qcqp_ball_projection_closed_form() {
    let layout = VarLayout::single(3);
    let mut prob = ConvexQcqp::new(layout);
    prob.objective.quads.push(QuadTerm { block: 0, mat: BlockMat::Dense(RMat::from_fn(3, 3, |r, c| if r == c { 2.0 } else { 0.0 })) });
    let (expr, rhs) = ball_constraint(3, &[1.0, 0.0, 0.0], 0.5, &prob.layout);
    prob.add_constraint(expr, rhs);
    let sol = solve_qcqp(&prob, &settings(), &[1.0, 0.0, 0.0]).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective - 0.25).abs() < 1e-8, "objective {}", sol.objective);
    assert!((sol.x[0] - 0.5).abs() < 1e-6);
    assert!(sol.x[1].abs() < 1e-6 && sol.x[2].abs() < 1e-6);
}

#[test]
fn qcqp_linear_objective_over_unit_ball() {
    let c = [0.6, -0.8];
    let layout = VarLayout::single(2);
    let mut prob = ConvexQcqp::new(layout);
    prob.objective.lin = c.to_vec();
    let (expr, rhs) = ball_constraint(2, &[0.0, 0.0], 1.0, &prob.layout);
    prob.add_constraint(expr, rhs);
    let sol = solve_qcqp(&prob, &settings(), &[0.0, 0.0]).unwrap();
    // minimizer is -c / |c| with |c| = 1 here
    assert!((sol.x[0] + 0.6).abs() < 1e-6);
    assert!((sol.x[1] - 0.8).abs() < 1e-6);
    assert!((sol.objective + 1.0).abs() < 1e-8);
}

#[test]
fn qcqp_phase_one_recovers_from_infeasible_start() {
    let layout = VarLayout::single(2);
    let mut prob = ConvexQcqp::new(layout);
    prob.objective.quads.push(QuadTerm {
        block: 0,
        mat: BlockMat::Dense(RMat::from_fn(2, 2, |r, c| if r == c { 2.0 } else { 0.0 })),
    });
    let (expr, rhs) = ball_constraint(2, &[2.0, 0.0], 1.0, &prob.layout);
    prob.add_constraint(expr, rhs);
    // start far outside the ball
    let sol = solve_qcqp(&prob, &settings(), &[-5.0, 3.0]).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.x[0] - 1.0).abs() < 1e-5);
    assert!((sol.objective - 1.0).abs() < 1e-6);
}

#[test]
fn qcqp_disjoint_balls_are_infeasible() {
    let layout = VarLayout::single(2);
    let mut prob = ConvexQcqp::new(layout);
    let (e1, r1) = ball_constraint(2, &[0.0, 0.0], 1.0, &prob.layout);
    let (e2, r2) = ball_constraint(2, &[5.0, 0.0], 1.0, &prob.layout);
    prob.add_constraint(e1, r1);
    prob.add_constraint(e2, r2);
    match solve_qcqp(&prob, &settings(), &[0.0, 0.0]) {
        Err(SolverError::InfeasibleStart) => {}
        other => panic!("expected infeasibility, got {other:?}"),
    }
}

#[test]
fn kkt_residuals_small_at_optimum_and_grow_away_from_it() {
    let layout = VarLayout::single(3);
    let mut prob = ConvexQcqp::new(layout);
    prob.objective.quads.push(QuadTerm { block: 0, mat: BlockMat::Dense(RMat::from_fn(3, 3, |r, c| if r == c { 2.0 } else { 0.0 })) });
    let (expr, rhs) = ball_constraint(3, &[1.0, 0.0, 0.0], 0.5, &prob.layout);
    prob.add_constraint(expr, rhs);
    let s = settings();
    let sol = solve_qcqp(&prob, &s, &[1.0, 0.0, 0.0]).unwrap();
    let report = verify_kkt(&prob, &sol.x, &sol.multipliers, s.kkt_tolerance());
    assert!(
        report.passes(10.0 * s.kkt_tolerance()),
        "kkt residuals too large: {report:?}"
    );

    let perturb = |d: f64| {
        let mut x = sol.x.clone();
        x[1] += d;
        verify_kkt(&prob, &x, &sol.multipliers, s.kkt_tolerance()).stationarity
    };
    let small = perturb(1e-3);
    let large = perturb(1e-2);
    assert!(small > report.stationarity);
    let ratio = large / small;
    assert!((2.0..50.0).contains(&ratio), "expected roughly linear growth, ratio {ratio}");
}

#[test]
fn stage_objectives_never_increase() {
    let layout = VarLayout::single(3);
    let mut prob = ConvexQcqp::new(layout);
    prob.objective.quads.push(QuadTerm { block: 0, mat: BlockMat::Dense(RMat::from_fn(3, 3, |r, c| if r == c { 2.0 } else { 0.0 })) });
    prob.objective.lin = vec![0.3, -0.2, 0.1];
    let (expr, rhs) = ball_constraint(3, &[1.0, 1.0, 0.0], 2.0, &prob.layout);
    prob.add_constraint(expr, rhs);
    let sol = solve_qcqp(&prob, &settings(), &[1.0, 1.0, 0.0]).unwrap();
    for w in sol.stage_objectives.windows(2) {
        assert!(w[1] <= w[0] + 1e-8 * (1.0 + w[0].abs()), "stage objective increased: {w:?}");
    }
}

#[test]
fn dense_and_block_paths_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let layout = VarLayout::new(vec![4, 4, 4]);
    let mut prob = ConvexQcqp::new(layout);
    for b in 0..3 {
        let raw = RMat::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let mut psd = RMat::zeros(4, 4);
        for r in 0..4 {
            for c in 0..4 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += raw[(r, k)] * raw[(c, k)];
                }
                psd[(r, c)] = acc;
            }
        }
        psd.add_diag(0.2);
        prob.objective.quads.push(QuadTerm { block: b, mat: BlockMat::Dense(psd) });
    }
    for i in 0..12 {
        prob.objective.lin[i] = rng.gen_range(-1.0..1.0);
    }
    // one coupled ball constraint across all coordinates
    let mut expr = QuadExpr::zero(&prob.layout);
    for b in 0..3 {
        expr.quads.push(QuadTerm { block: b, mat: BlockMat::Dense(RMat::from_fn(4, 4, |r, c| if r == c { 2.0 } else { 0.0 })) });
    }
    prob.add_constraint(expr, 4.0);
    let x0 = vec![0.0; 12];

    let dense = solve_qcqp(&prob, &settings(), &x0).unwrap();
    let mut block_settings = settings();
    block_settings.dense_limit = 0;
    let block = solve_qcqp(&prob, &block_settings, &x0).unwrap();
    assert!((dense.objective - block.objective).abs() < 1e-7);
    for (a, b) in dense.x.iter().zip(block.x.iter()) {
        assert!((a - b).abs() < 1e-5, "paths disagree: {a} vs {b}");
    }
}

#[test]
fn validate_psd_ridges_marginal_and_rejects_indefinite() {
    let layout = VarLayout::single(2);
    let mut prob = ConvexQcqp::new(layout.clone());
    // marginally indefinite from rounding: eigenvalues {1, -3e-10}
    let mut m = RMat::zeros(2, 2);
    m[(0, 0)] = 1.0;
    m[(1, 1)] = -3e-10;
    prob.objective.quads.push(QuadTerm { block: 0, mat: BlockMat::Dense(m) });
    prob.validate_psd(1e-10).unwrap();
    assert_eq!(prob.ridged_terms, 1);

    let mut bad = ConvexQcqp::new(layout);
    let mut m = RMat::zeros(2, 2);
    m[(0, 0)] = 1.0;
    m[(1, 1)] = -1.0;
    bad.objective.quads.push(QuadTerm { block: 0, mat: BlockMat::Dense(m) });
    assert!(bad.validate_psd(1e-10).is_err());
}
