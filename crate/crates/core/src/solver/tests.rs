use super::*;
use crate::convexify::build_original;
use crate::corpus::{generate, GenParams};
use crate::instance::{check_feasible, evaluate, LinearRow, MiqcqpInstance, QuadConstraint, SymSparseMatrix};

fn enumerate_binary(inst: &MiqcqpInstance) -> Option<f64> {
    let n = inst.n;
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << n) {
        let x: Vec<f64> = (0..n).map(|j| ((mask >> j) & 1) as f64).collect();
        if check_feasible(inst, &x, 1e-9) {
            let f = evaluate(inst, &x).objective;
            if best.is_none_or(|b| f < b) {
                best = Some(f);
            }
        }
    }
    best
}

#[test]
fn continuous_convex_boundary_optimum() {
    let mut inst = MiqcqpInstance::new("b", 1);
    inst.lower = vec![1.0];
    inst.upper = vec![2.0];
    inst.objective.q = SymSparseMatrix::diagonal(&[1.0]);
    let r = solve_convex(&SolveRequest::new(build_original(&inst), 10.0));
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.x.unwrap()[0] - 1.0).abs() < 1e-6);
    assert!((r.objective.unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn two_binary_convex_miqp_matches_enumeration() {
    let mut inst = MiqcqpInstance::new("b2", 2);
    inst.integer = vec![true, true];
    inst.objective.q = SymSparseMatrix::from_triplets(2, [(0, 0, 2.0), (0, 1, 1.0), (1, 1, 2.0)]);
    inst.objective.a = vec![-3.0, -2.5];
    inst.linear.push(LinearRow { coeffs: vec![(0, 1.0), (1, 1.0)], rhs: 1.5 });
    let r = solve_convex(&SolveRequest::new(build_original(&inst), 10.0));
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.objective.unwrap() - enumerate_binary(&inst).unwrap()).abs() < 1e-6);
}

#[test]
fn knapsack_milp_matches_enumeration() {
    let w = [3.0, 4.0, 5.0, 2.0, 6.0, 1.5];
    let v = [4.0, 5.0, 7.0, 2.5, 8.0, 1.0];
    let mut inst = MiqcqpInstance::new("knap", 6);
    inst.integer = vec![true; 6];
    inst.objective.a = v.iter().map(|x| -x).collect();
    inst.linear.push(LinearRow { coeffs: w.iter().copied().enumerate().collect(), rhs: 11.0 });
    let r = solve_convex(&SolveRequest::new(build_original(&inst), 20.0));
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.objective.unwrap() - enumerate_binary(&inst).unwrap()).abs() < 1e-6);
}

#[test]
fn first_feasible_stops_early() {
    let mut inst = MiqcqpInstance::new("ff", 6);
    inst.integer = vec![true; 6];
    inst.objective.a = vec![-1.0; 6];
    inst.linear.push(LinearRow { coeffs: (0..6).map(|j| (j, 1.0)).collect(), rhs: 3.5 });
    let r = InternalBackend.solve(&SolveRequest::new(build_original(&inst), 10.0).goal(Goal::FirstFeasible));
    assert_eq!(r.status, SolveStatus::Feasible);
    assert!(check_feasible(&inst, r.x.as_ref().unwrap(), 1e-6));
}

#[test]
fn infeasible_root() {
    let mut inst = MiqcqpInstance::new("inf", 2);
    inst.integer = vec![true, true];
    inst.linear.push(LinearRow { coeffs: vec![(0, -1.0), (1, -1.0)], rhs: -2.5 });
    let r = InternalBackend.solve(&SolveRequest::new(build_original(&inst), 10.0));
    assert_eq!(r.status, SolveStatus::Infeasible);
    assert!(r.x.is_none());
}

#[test]
fn cutoff_rejects_worse_points() {
    let mut inst = MiqcqpInstance::new("c", 2);
    inst.integer = vec![true, true];
    inst.objective.a = vec![1.0, 1.0];
    let r = InternalBackend.solve(&SolveRequest::new(build_original(&inst), 10.0).cutoff(-0.5));
    assert_eq!(r.status, SolveStatus::Infeasible);
}

#[test]
fn nonconvex_quadratic_row_finds_feasible_point() {
    // x0 binary, x1 in [0, 2]: -x1^2 + x0 <= -1 forces x1 >= 1 when x0 = 0
    let mut inst = MiqcqpInstance::new("nc", 2);
    inst.integer = vec![true, false];
    inst.upper = vec![1.0, 2.0];
    inst.objective.a = vec![-1.0, 1.0];
    inst.quad_constraints.push(QuadConstraint {
        q: SymSparseMatrix::from_triplets(2, [(1, 1, -1.0)]),
        a: vec![1.0, 0.0],
        rhs: -1.0,
    });
    let r = InternalBackend.solve(&SolveRequest::new(build_original(&inst), 10.0));
    assert!(r.status.has_solution(), "{r:?}");
    let x = r.x.unwrap();
    assert!(check_feasible(&inst, &x, 1e-6));
    // optimum: x0 = 1, x1 = sqrt(2)
    assert!((r.objective.unwrap() - (-1.0 + 2f64.sqrt())).abs() < 1e-5, "{x:?}");
}

#[test]
fn internal_matches_brute_force_on_small_generated_instances() {
    for seed in 0..8 {
        let p = GenParams { n_binary: 3, n_general: 1, n_continuous: 0, m1: 1, m2: 1, seed, ..Default::default() };
        let (inst, _) = generate(&p);
        let oracle = brute_force(&inst, 1);
        let r = InternalBackend.solve(&SolveRequest::new(build_original(&inst), 20.0));
        assert_eq!(oracle.status, SolveStatus::Optimal);
        assert_eq!(r.status, SolveStatus::Optimal, "seed {seed}");
        let (a, b) = (r.objective.unwrap(), oracle.objective.unwrap());
        assert!((a - b).abs() <= 1e-4 * (1.0 + b.abs()), "seed {seed}: {a} vs {b}");
    }
}

#[test]
fn brute_force_pure_binary() {
    let mut inst = MiqcqpInstance::new("bb", 3);
    inst.integer = vec![true; 3];
    inst.objective.q = SymSparseMatrix::from_triplets(3, [(0, 1, -2.0), (1, 2, 1.5), (0, 0, 1.0)]);
    inst.objective.a = vec![-0.5, 0.25, -1.0];
    let r = brute_force(&inst, 1);
    assert_eq!(r.status, SolveStatus::Optimal);
    assert_eq!(r.nodes, 8);
    assert!((r.objective.unwrap() - enumerate_binary(&inst).unwrap()).abs() < 1e-12);
}

#[test]
fn brute_force_mixed_closed_form() {
    // min (y - 0.3)^2 - 0.5 b + b y, y in [0, 1]: b = 1 gives y = 0, f = -0.41
    let mut inst = MiqcqpInstance::new("bm", 2);
    inst.integer = vec![true, false];
    inst.objective.q = SymSparseMatrix::from_triplets(2, [(1, 1, 1.0), (0, 1, 0.5)]);
    inst.objective.a = vec![-0.5, -0.6];
    inst.objective.constant = 0.09;
    let r = brute_force(&inst, 1001);
    assert_eq!(r.status, SolveStatus::Feasible);
    assert_eq!(r.nodes, 2002);
    assert!((r.objective.unwrap() + 0.41).abs() < 1e-3, "{r:?}");
}

#[test]
fn brute_force_infeasible_and_guard() {
    let mut inst = MiqcqpInstance::new("bi", 2);
    inst.integer = vec![true, true];
    inst.linear.push(LinearRow { coeffs: vec![(0, 1.0), (1, 1.0)], rhs: -0.5 });
    assert_eq!(brute_force(&inst, 1).status, SolveStatus::Infeasible);
    let big = MiqcqpInstance::new("big", 4);
    assert_eq!(brute_force(&big, 3).status, SolveStatus::Error);
}

#[test]
fn local_nlp_fixed_integer() {
    let mut inst = MiqcqpInstance::new("l", 2);
    inst.integer = vec![true, false];
    inst.upper = vec![1.0, 4.0];
    inst.objective.q = SymSparseMatrix::from_triplets(2, [(1, 1, 1.0), (0, 1, -1.0)]);
    let r = solve_local_nlp(&inst, &[(0, 1.0)], &[1.0, 3.0], 5.0);
    assert_eq!(r.status, SolveStatus::Feasible);
    assert!((r.x.unwrap()[1] - 1.0).abs() < 1e-6);
}

#[test]
fn solution_file_round_trip() {
    let mut inst = MiqcqpInstance::new("s", 2);
    inst.integer = vec![true, false];
    let m = build_original(&inst);
    let r = SolveResult {
        status: SolveStatus::Feasible,
        x: Some(vec![1.0, 0.25]),
        objective: Some(0.0),
        dual_bound: None,
        wall_time_s: 0.0,
        nodes: 0,
        timed_out: false,
        message: None,
    };
    let text = write_solution_file(&m, &r);
    let p = parse_solution_file(&text).unwrap();
    assert_eq!(p.status, SolveStatus::Feasible);
    assert_eq!(p.objective, Some(0.0));
    assert_eq!(p.values.len(), 2);
    assert_eq!(p.values[1].1, 0.25);
    assert!(parse_solution_file("").is_err());
    assert!(parse_solution_file("maybe\n1\n").is_err());
    assert!(parse_solution_file("feasible\n1\nx0\n").is_err());
}

#[test]
fn cancelled_request_returns_quickly() {
    let p = GenParams { n_binary: 10, n_general: 2, n_continuous: 3, m1: 2, m2: 2, seed: 3, ..Default::default() };
    let (inst, _) = generate(&p);
    let token = CancelToken::new();
    token.cancel();
    let r = InternalBackend.solve(&SolveRequest::new(build_original(&inst), 60.0).cancel(token));
    assert!(r.wall_time_s < 5.0);
    assert_ne!(r.status, SolveStatus::Optimal);
}
