mod common;

use miqcqp_core::convexify::{build_relaxation, Shifts};
use miqcqp_core::corpus::{generate, GenParams};
use miqcqp_core::heuristics::{
    domain_propagate, random_flip, random_flip_project, relaxing_projection, Propagation, PumpConfig, RunContext,
};
use miqcqp_core::instance::{check_feasible, evaluate, normalize, MiqcqpInstance};
use miqcqp_core::solver::{brute_force, solve_convex, SolveRequest};
use miqcqp_core::spectral::ShiftRule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

fn ctx() -> RunContext {
    RunContext::new(60.0)
}

#[test]
fn relaxing_projection_on_twenty_planted_miqcps() {
    let mut found = 0;
    for seed in 0..20u64 {
        let p = GenParams {
            n_binary: 3 + (seed % 3) as usize,
            n_general: (seed % 2) as usize,
            n_continuous: 2 + (seed % 2) as usize,
            m1: 1 + (seed % 2) as usize,
            m2: 1,
            seed: 300 + seed,
            ..Default::default()
        };
        let (inst, _) = generate(&p);
        let cfg = PumpConfig { seed, ..Default::default() };
        let out = relaxing_projection(&inst, &cfg, &ctx(), None).unwrap();
        if let Some(x) = &out.x_star {
            assert!(check_feasible(&inst, x, 1e-6), "seed {seed}");
            found += 1;
        }
    }
    assert!(found >= 16, "found {found}/20");
}

#[test]
fn flip_and_project_is_always_feasible_on_random_miqps() {
    for seed in 0..20u64 {
        let p = GenParams {
            n_binary: 2 + (seed % 7) as usize,
            n_general: (seed % 2) as usize,
            n_continuous: (seed % 3) as usize,
            m1: 0,
            m2: 1 + (seed % 3) as usize,
            seed: 400 + seed,
            ..Default::default()
        };
        assert!(p.n_binary <= 8);
        let (inst, _) = generate(&p);
        let out = random_flip_project(&inst, &PumpConfig { seed, ..Default::default() }, &ctx()).unwrap();
        let x = out.x_star.expect("feasible instance yields a point");
        assert!(check_feasible(&inst, &x, 1e-6), "seed {seed}");
    }
}

/// Nearest rounding of the convex relaxation's minimizer.
fn rounded_relaxation(inst: &MiqcqpInstance) -> f64 {
    let norm = normalize(inst);
    let shifts = Shifts::compute(&norm.inst, ShiftRule::Safe);
    let relax = build_relaxation(&norm.inst, &shifts).unwrap().continuous_relaxation();
    let r = solve_convex(&SolveRequest::new(relax, 10.0));
    let y: Vec<f64> = r.x.unwrap()[..inst.n].iter().map(|v| v.round()).collect();
    evaluate(inst, &norm.to_original(&y)).objective
}

#[test]
fn random_flip_beats_nearest_rounding() {
    let mut wins = 0;
    for seed in 0..100u64 {
        let p = GenParams { n_binary: 6, n_general: 0, n_continuous: 0, m1: 0, m2: 0, seed: 600 + seed, ..Default::default() };
        let (inst, _) = generate(&p);
        let out = random_flip(&inst, &PumpConfig { seed, ..Default::default() }, &ctx()).unwrap();
        if out.objective.unwrap() <= rounded_relaxation(&inst) + 1e-9 {
            wins += 1;
        }
    }
    assert!(wins >= 90, "{wins}/100");
}

#[test]
fn propagation_never_prunes_extendable_fixes() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    while checked < 1000 {
        let p = GenParams {
            n_binary: 3,
            n_general: 1,
            n_continuous: 1,
            m1: rng.random_range(0..2),
            m2: rng.random_range(1..3),
            slack: rng.random_range(0.0..1.0),
            seed: rng.random(),
            ..Default::default()
        };
        let (inst, _) = generate(&p);
        for _ in 0..10 {
            let mut fixed = inst.clone();
            let mut fix = HashMap::new();
            for j in inst.integer_indices() {
                if rng.random_bool(0.6) {
                    let v = rng.random_range(inst.lower[j] as i64..=inst.upper[j] as i64) as f64;
                    fix.insert(j, v);
                    fixed.lower[j] = v;
                    fixed.upper[j] = v;
                }
            }
            let verdict = domain_propagate(&inst, &fix);
            let extension = brute_force(&fixed, 11);
            if let Some(x) = extension.x.filter(|_| extension.status.has_solution()) {
                assert_ne!(verdict, Propagation::Infeasible, "fix {fix:?} extends to {x:?}");
            }
            if verdict == Propagation::Feasible {
                // every completion within the tightened bounds is feasible, so one exists
                assert!(extension.status.has_solution(), "fix {fix:?} judged feasible without extension");
            }
            checked += 1;
        }
    }
}
