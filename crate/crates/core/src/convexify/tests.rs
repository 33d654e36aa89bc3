use super::*;
use crate::corpus::{generate, GenParams};
use crate::instance::{check_feasible, evaluate, normalize, MiqcqpInstance, SymSparseMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn one_dim(q: f64, upper: f64) -> MiqcqpInstance {
    let mut inst = MiqcqpInstance::new("d", 1);
    inst.upper = vec![upper];
    inst.objective.q = SymSparseMatrix::diagonal(&[q]);
    inst
}

/// All assignments of the model's binary auxiliaries that satisfy its
/// linear rows when `fixed` variables are pinned.
fn feasible_aux_assignments(m: &ModelIR, fixed: &[(usize, f64)], free: &[usize]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let n = m.n_vars();
    for mask in 0u64..(1u64 << free.len()) {
        let mut x = vec![0.0; n];
        for &(j, v) in fixed {
            x[j] = v;
        }
        for (k, &j) in free.iter().enumerate() {
            x[j] = ((mask >> k) & 1) as f64;
        }
        // X is determined by its defining equality
        for (j, v) in m.variables.iter().enumerate() {
            if let VarOrigin::Square { .. } = v.origin {
                // recompute X from H and bits through the defining row
                let row = m
                    .linear_constraints
                    .iter()
                    .find(|r| r.sense == Sense::Eq && r.coeffs.iter().any(|&(k, c)| k == j && c == 1.0))
                    .unwrap();
                let rest: f64 = row.coeffs.iter().filter(|&&(k, _)| k != j).map(|&(k, c)| c * x[k]).sum();
                x[j] = row.rhs - rest;
            }
        }
        if m.linear_constraints.iter().all(|r| r.violation(&x) <= 1e-12) {
            out.push(x);
        }
    }
    out
}

#[test]
fn bit_counts() {
    assert_eq!(bit_count(0.0, 1.0), 1);
    assert_eq!(bit_count(0.0, 5.0), 3);
    assert_eq!(bit_count(3.0, 10.0), 3);
    assert_eq!(bit_count(0.0, 8.0), 4);
}

#[test]
fn expansion_of_fixed_variable_fails() {
    let mut b = ModelBuilder::new("m");
    b.add_var("x0", 2.0, 2.0, VarKind::Integer, VarOrigin::Original { index: 0 });
    assert_eq!(b.binary_expand(0, 2.0, 2.0), Err(ConvexifyError::FixedVariable(0)));
}

#[test]
fn expansion_with_offset_hits_exact_range() {
    let mut b = ModelBuilder::new("m");
    b.add_var("x0", 3.0, 10.0, VarKind::Integer, VarOrigin::Original { index: 0 });
    let e = b.binary_expand(0, 3.0, 10.0).unwrap();
    assert_eq!(e.bits.len(), 3);
    assert_eq!(e.weights, vec![1.0, 2.0, 4.0]);
    let m = b.finish(true);
    let mut values: Vec<i64> = Vec::new();
    for mask in 0..8u32 {
        let mut x = vec![0.0; m.n_vars()];
        for (k, &bit) in e.bits.iter().enumerate() {
            x[bit] = ((mask >> k) & 1) as f64;
        }
        x[0] = e.value(&x);
        if m.is_feasible(&x, 0.0) {
            values.push(x[0] as i64);
        }
    }
    values.sort();
    assert_eq!(values, (3..=10).collect::<Vec<_>>());
}

#[test]
fn h_linearization_is_exact_for_small_expansions() {
    for (lo, hi) in [(0.0, 1.0), (0.0, 3.0), (0.0, 7.0), (-2.0, 3.0), (3.0, 10.0)] {
        let mut b = ModelBuilder::new("m");
        b.add_var("x0", lo, hi, VarKind::Integer, VarOrigin::Original { index: 0 });
        let e = b.binary_expand(0, lo, hi).unwrap();
        let x_sq = b.build_h_linearization(&e);
        let m = b.finish(true);
        let h_vars: Vec<usize> = (0..m.n_vars())
            .filter(|&j| matches!(m.variables[j].origin, VarOrigin::BitProduct { .. }))
            .collect();
        let nb = e.bits.len();
        assert_eq!(h_vars.len(), nb * (nb + 1) / 2);
        for mask in 0u64..(1u64 << nb) {
            let mut fixed: Vec<(usize, f64)> = e
                .bits
                .iter()
                .enumerate()
                .map(|(k, &b)| (b, ((mask >> k) & 1) as f64))
                .collect();
            let value = lo + (0..nb).map(|k| ((mask >> k) & 1) as f64 * (1u64 << k) as f64).sum::<f64>();
            fixed.push((0, value));
            let sols = feasible_aux_assignments(&m, &fixed, &h_vars);
            assert_eq!(sols.len(), 1, "H must be forced for pattern {mask}");
            assert_eq!(sols[0][x_sq], value * value);
        }
    }
}

#[test]
fn approx_of_convex_instance_is_the_original() {
    let mut inst = MiqcqpInstance::new("c", 2);
    inst.objective.q = SymSparseMatrix::identity(2);
    inst.objective.a = vec![1.0, -1.0];
    inst.integer = vec![true, false];
    let shifts = Shifts::compute(&inst, ShiftRule::Safe);
    assert!(shifts.all_zero());
    let approx = build_approx(&inst, &UHat::upper(&inst), &shifts).unwrap();
    let orig = build_original(&inst);
    assert_eq!(approx.variables, orig.variables);
    assert_eq!(approx.objective, orig.objective);
    assert_eq!(approx.quad_constraints, orig.quad_constraints);
    assert_eq!(approx.linear_constraints, orig.linear_constraints);
    assert!(approx.convex && orig.convex);
}

#[test]
fn one_dimensional_concave_approximation() {
    let inst = one_dim(-1.0, 2.0);
    let shifts = Shifts::compute(&inst, ShiftRule::Classic);
    assert_eq!(shifts.values, vec![-1.0]);
    for u_hat in [0.5, 1.0, 2.0] {
        let m = build_approx(&inst, &UHat { values: vec![u_hat] }, &shifts).unwrap();
        assert!(m.objective.q.is_empty());
        for x in [0.0, 0.7, 2.0] {
            assert!((m.objective.eval(&[x]) + u_hat * x).abs() < 1e-12);
        }
    }
    // û = u: -2x <= -x^2 on [0, 2]
    let r = build_relaxation(&inst, &shifts).unwrap();
    for k in 0..=20 {
        let x = k as f64 * 0.1;
        assert!(r.objective.eval(&[x]) <= -x * x + 1e-12);
    }
}

#[test]
fn non_psd_perturbation_is_rejected() {
    let inst = one_dim(-1.0, 2.0);
    let shifts = Shifts::from_values(&inst, ShiftRule::Classic, vec![-0.5]);
    assert!(matches!(build_approx(&inst, &UHat::upper(&inst), &shifts), Err(ConvexifyError::NotPsd { .. })));
}

#[test]
fn approx_requires_normalized_instance() {
    let mut inst = one_dim(-1.0, 2.0);
    inst.lower = vec![1.0];
    let shifts = Shifts::compute(&inst, ShiftRule::Classic);
    assert_eq!(build_approx(&inst, &UHat::upper(&inst), &shifts), Err(ConvexifyError::NotNormalized));
}

#[test]
fn pure_binary_approx_matches_original_on_binary_points() {
    for seed in 0..10 {
        let (inst, _) = generate(&GenParams {
            n_binary: 6,
            n_general: 0,
            n_continuous: 0,
            m1: 0,
            m2: 0,
            seed,
            ..Default::default()
        });
        let shifts = Shifts::compute(&inst, ShiftRule::Safe);
        let m = build_relaxation(&inst, &shifts).unwrap();
        assert_eq!(m.n_vars(), 6);
        for mask in 0u32..64 {
            let x: Vec<f64> = (0..6).map(|k| ((mask >> k) & 1) as f64).collect();
            let a = m.objective.eval(&x);
            let o = evaluate(&inst, &x).objective;
            assert!((a - o).abs() <= 1e-9, "seed {seed} mask {mask}: {a} vs {o}");
        }
    }
}

#[test]
fn relaxation_never_cuts_feasible_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for seed in 0..50 {
        let (inst, planted) = generate(&GenParams {
            n_binary: 2,
            n_general: 1,
            n_continuous: 2,
            m1: 2,
            m2: 1,
            slack: 2.0,
            seed,
            ..Default::default()
        });
        let norm = normalize(&inst);
        for rule in [ShiftRule::Classic, ShiftRule::Safe] {
            let shifts = Shifts::compute(&norm, rule);
            let relax = build_relaxation(&norm, &shifts).unwrap();
            let mut points = vec![planted.clone()];
            for _ in 0..200 {
                let x: Vec<f64> = (0..inst.n)
                    .map(|j| {
                        let v = rng.random_range(inst.lower[j]..=inst.upper[j]);
                        if inst.integer[j] { v.round() } else { v }
                    })
                    .collect();
                points.push(x);
            }
            for x in points.into_iter().filter(|x| check_feasible(&inst, x, 0.0)) {
                let y = norm.from_original(&x);
                let full = relax.complete(&y);
                let ev = relax.evaluate(&full);
                assert!(ev.max_violation <= 1e-9, "seed {seed}: {}", ev.max_violation);
                assert!(ev.objective <= evaluate(&inst, &x).objective + 1e-9);
                checked += 1;
            }
        }
    }
    assert!(checked > 100);
}

#[test]
fn integer_hull_auxiliaries_are_exact() {
    for seed in 0..20 {
        let (inst, _) = generate(&GenParams {
            n_binary: 2,
            n_general: 2,
            n_continuous: 1,
            m1: 1,
            m2: 0,
            int_range: 5,
            seed,
            ..Default::default()
        });
        let norm = normalize(&inst);
        let shifts = Shifts::compute(&norm, ShiftRule::Safe);
        let m = build_relaxation(&norm, &shifts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let y: Vec<f64> = (0..norm.n)
                .map(|j| {
                    if norm.integer[j] {
                        rng.random_range(0..=norm.upper[j] as i64) as f64
                    } else {
                        rng.random_range(0.0..=norm.upper[j])
                    }
                })
                .collect();
            let full = m.complete(&y);
            assert!(m.linear_constraints.iter().all(|r| r.violation(&full) == 0.0));
            for (j, v) in m.variables.iter().enumerate() {
                if let VarOrigin::Square { var } = v.origin {
                    assert_eq!(full[j], y[var] * y[var]);
                }
            }
        }
    }
}

#[test]
fn fpr1_one_dimensional_row() {
    // -x^2 <= -1 on [0, 3], shift -1, û = 2  =>  -2x <= -1
    let mut inst = MiqcqpInstance::new("f", 1);
    inst.upper = vec![3.0];
    inst.quad_constraints.push(crate::instance::QuadConstraint {
        q: SymSparseMatrix::diagonal(&[-1.0]),
        a: vec![0.0],
        rhs: -1.0,
    });
    let shifts = Shifts::compute(&inst, ShiftRule::Classic);
    assert_eq!(shifts.values, vec![0.0, -1.0]);
    let m = build_fpr1(&inst, &UHat { values: vec![2.0] }, &shifts).unwrap();
    let row = &m.quad_constraints[0];
    assert!(row.q.is_empty());
    assert_eq!(row.coeffs, vec![(0, -2.0)]);
    assert_eq!(m.n_vars(), 2);
    // δ = û - x at x = 1/2 is feasible with objective 3/2
    let x = m.complete(&[0.5]);
    assert!(m.is_feasible(&x, 1e-12));
    assert_eq!(m.objective.eval(&x), 1.5);
    // û = 0: δ = 0 whenever the rows hold
    let m0 = build_fpr1(&inst, &UHat { values: vec![0.0] }, &shifts).unwrap();
    assert_eq!(m0.objective.eval(&m0.complete(&[1.0])), 0.0);
}

#[test]
fn fpr2_slack_warm_start_is_feasible() {
    for seed in 0..10 {
        let (inst, planted) = generate(&GenParams { m1: 2, seed, ..Default::default() });
        let m = build_fpr2(&inst);
        let x = m.complete(&planted);
        assert!(m.is_feasible(&x, 1e-12));
        assert_eq!(m.objective.eval(&x), 0.0);
        let center = inst.box_center();
        let xc = m.complete(&center);
        let total: f64 = inst.quad_constraints.iter().map(|c| c.violation(&center)).sum();
        assert!(m.quad_constraints.iter().all(|r| r.violation(&xc) <= 1e-12));
        assert!((m.objective.eval(&xc) - total).abs() <= 1e-9);
    }
}

#[test]
fn l1_projection_at_interior_reference_is_zero() {
    let (inst, planted) = generate(&GenParams { seed: 3, ..Default::default() });
    let region = build_original(&inst);
    let over: Vec<usize> = (0..inst.n).collect();
    let p = build_l1_projection(&region, &planted, &over);
    let x = p.complete(&planted);
    assert!(p.is_feasible(&x, 1e-12));
    assert_eq!(p.objective.eval(&x), 0.0);
}

#[test]
fn lbc_distances() {
    let b = [0, 1, 2];
    let xr = [1.0, 0.0, 1.0];
    assert_eq!(delta(&b, &xr, &xr), 0.0);
    assert_eq!(delta(&b, &xr, &[0.0, 0.0, 1.0]), 1.0);
    assert_eq!(delta(&b, &xr, &[0.0, 1.0, 0.0]), 3.0);
    assert_eq!(delta_r(&b, &xr, &xr), 3.0);
    assert_eq!(delta_r(&b, &xr, &[0.0, 1.0, 0.0]), 0.0);
}

#[test]
fn lbc_rows_match_distance_windows() {
    let mut inst = MiqcqpInstance::new("b", 6);
    inst.integer = vec![true; 6];
    let model = build_original(&inst);
    let b: Vec<usize> = (0..6).collect();
    let xr = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
    let m = add_lbc(&model, &b, &xr, 2, 4).unwrap();
    let r = add_rlbc(&model, &b, &xr, 2).unwrap();
    for mask in 0u32..64 {
        let x: Vec<f64> = (0..6).map(|k| ((mask >> k) & 1) as f64).collect();
        let d = delta(&b, &xr, &x);
        assert_eq!(m.is_feasible(&x, 1e-12), (2.0..=4.0).contains(&d));
        assert_eq!(r.is_feasible(&x, 1e-12), delta_r(&b, &xr, &x) <= 2.0);
    }
    // sides are omitted at the extremes
    assert_eq!(add_lbc(&model, &b, &xr, 0, 6).unwrap().linear_constraints.len(), 0);
    assert_eq!(add_lbc(&model, &[], &[], 1, 2), Err(ConvexifyError::NoBinaries));
}

#[test]
fn branching_model_includes_expansion_bits() {
    let mut inst = MiqcqpInstance::new("g", 3);
    inst.integer = vec![true, true, false];
    inst.upper = vec![1.0, 5.0, 1.0];
    let (m, b) = build_branching_model(&inst);
    assert_eq!(b.len(), 1 + 3);
    let x = m.complete(&[1.0, 5.0, 0.3]);
    assert!(m.is_feasible(&x, 1e-12));
}

#[test]
fn model_json_round_trip() {
    let (inst, _) = generate(&GenParams { seed: 4, ..Default::default() });
    let norm = normalize(&inst);
    let m = build_relaxation(&norm, &Shifts::compute(&norm, ShiftRule::Safe)).unwrap();
    let back = ModelIR::from_json(&m.to_json()).unwrap();
    assert_eq!(back, m);
    assert_eq!(m.metadata().len(), m.n_vars());
}

proptest! {
    #[test]
    fn complement_identity(bits in proptest::collection::vec(0u8..2, 8), xs in proptest::collection::vec(0u8..2, 8)) {
        let b: Vec<usize> = (0..8).collect();
        let xr: Vec<f64> = bits.iter().map(|&v| v as f64).collect();
        let x: Vec<f64> = xs.iter().map(|&v| v as f64).collect();
        prop_assert_eq!(delta(&b, &xr, &x) + delta_r(&b, &xr, &x), 8.0);
    }
}
