//! Interval-based domain propagation for partial integer fixings.

use crate::instance::{MiqcqpInstance, SymSparseMatrix};
use std::collections::HashMap;

const ROUNDS: usize = 5;
const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagation {
    /// Every completion within the propagated bounds satisfies all rows.
    Feasible,
    /// No completion satisfies the rows.
    Infeasible,
    Unknown,
}

fn scaled_tol(rhs: f64) -> f64 {
    TOL * rhs.abs().max(1.0)
}

/// Range of `v * x` for `x in [lo, hi]`.
fn scaled(v: f64, lo: f64, hi: f64) -> (f64, f64) {
    if v >= 0.0 {
        (v * lo, v * hi)
    } else {
        (v * hi, v * lo)
    }
}

/// Range of `x^2` for `x in [lo, hi]`.
fn square(lo: f64, hi: f64) -> (f64, f64) {
    if lo >= 0.0 {
        (lo * lo, hi * hi)
    } else if hi <= 0.0 {
        (hi * hi, lo * lo)
    } else {
        (0.0, (lo * lo).max(hi * hi))
    }
}

/// Range of `x * y` for boxed `x`, `y`.
fn product(xl: f64, xh: f64, yl: f64, yh: f64) -> (f64, f64) {
    let c = [xl * yl, xl * yh, xh * yl, xh * yh];
    (
        c.iter().copied().fold(f64::INFINITY, f64::min),
        c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    )
}

fn quad_range(q: &SymSparseMatrix, a: &[f64], lo: &[f64], hi: &[f64]) -> (f64, f64) {
    let (mut min, mut max) = (0.0, 0.0);
    for &(r, c, v) in q.entries() {
        let (pl, ph) = if r == c {
            square(lo[r], hi[r])
        } else {
            product(lo[r], hi[r], lo[c], hi[c])
        };
        let w = if r == c { v } else { 2.0 * v };
        let (l, h) = scaled(w, pl, ph);
        min += l;
        max += h;
    }
    for (j, &v) in a.iter().enumerate() {
        if v != 0.0 {
            let (l, h) = scaled(v, lo[j], hi[j]);
            min += l;
            max += h;
        }
    }
    (min, max)
}

/// Propagates `partial_fix` through the linear rows (bound tightening) and
/// checks quadratic rows with interval arithmetic, for at most five rounds.
///
/// Both verdicts are sound: `Infeasible` means some row's minimum activity
/// exceeds its right-hand side, `Feasible` means every row's maximum
/// activity is within it.
pub fn domain_propagate(inst: &MiqcqpInstance, partial_fix: &HashMap<usize, f64>) -> Propagation {
    let mut lo = inst.lower.clone();
    let mut hi = inst.upper.clone();
    for (&j, &v) in partial_fix {
        debug_assert!(v >= inst.lower[j] - TOL && v <= inst.upper[j] + TOL);
        lo[j] = v;
        hi[j] = v;
    }
    for _ in 0..ROUNDS {
        let mut changed = false;
        for row in &inst.linear {
            let tol = scaled_tol(row.rhs);
            let min_act: f64 = row.coeffs.iter().map(|&(j, v)| scaled(v, lo[j], hi[j]).0).sum();
            if min_act > row.rhs + tol {
                return Propagation::Infeasible;
            }
            // v x_j <= rhs - (min_act - min_j)
            for &(j, v) in &row.coeffs {
                if v == 0.0 || lo[j] == hi[j] {
                    continue;
                }
                let slack = row.rhs - (min_act - scaled(v, lo[j], hi[j]).0);
                let bound = slack / v;
                if v > 0.0 {
                    let mut nh = bound + tol / v.abs();
                    if inst.integer[j] {
                        nh = (nh + TOL).floor();
                    }
                    if nh < hi[j] - TOL {
                        hi[j] = nh.max(lo[j] - 1.0);
                        changed = true;
                    }
                } else {
                    let mut nl = bound - tol / v.abs();
                    if inst.integer[j] {
                        nl = (nl - TOL).ceil();
                    }
                    if nl > lo[j] + TOL {
                        lo[j] = nl.min(hi[j] + 1.0);
                        changed = true;
                    }
                }
                if lo[j] > hi[j] + TOL {
                    return Propagation::Infeasible;
                }
            }
        }
        if !changed {
            break;
        }
    }
    for j in 0..inst.n {
        lo[j] = lo[j].min(hi[j]);
    }
    let mut all_hold = true;
    for row in &inst.linear {
        let (min, max) = row.coeffs.iter().fold((0.0, 0.0), |(a, b), &(j, v)| {
            let (l, h) = scaled(v, lo[j], hi[j]);
            (a + l, b + h)
        });
        if min > row.rhs + scaled_tol(row.rhs) {
            return Propagation::Infeasible;
        }
        all_hold &= max <= row.rhs;
    }
    for c in &inst.quad_constraints {
        let (min, max) = quad_range(&c.q, &c.a, &lo, &hi);
        if min > c.rhs + scaled_tol(c.rhs) {
            return Propagation::Infeasible;
        }
        all_hold &= max <= c.rhs;
    }
    if all_hold {
        Propagation::Feasible
    } else {
        Propagation::Unknown
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{LinearRow, QuadConstraint};

    #[test]
    fn both_fixed_to_one_violates_row() {
        let mut inst = MiqcqpInstance::new("p", 2);
        inst.integer = vec![true, true];
        inst.linear.push(LinearRow { coeffs: vec![(0, 1.0), (1, 1.0)], rhs: 1.0 });
        let fix = HashMap::from([(0, 1.0), (1, 1.0)]);
        assert_eq!(domain_propagate(&inst, &fix), Propagation::Infeasible);
        let fix = HashMap::from([(0, 1.0)]);
        assert_eq!(domain_propagate(&inst, &fix), Propagation::Feasible);
    }

    #[test]
    fn unconstrained_is_feasible() {
        let inst = MiqcqpInstance::new("p", 3);
        assert_eq!(domain_propagate(&inst, &HashMap::new()), Propagation::Feasible);
    }

    #[test]
    fn chained_tightening_detects_conflict() {
        // x0 = 1 forces x1 = 0 through x0 + x1 <= 1, then x1 >= 1 conflicts
        let mut inst = MiqcqpInstance::new("p", 2);
        inst.integer = vec![true, true];
        inst.linear.push(LinearRow { coeffs: vec![(0, 1.0), (1, 1.0)], rhs: 1.0 });
        inst.linear.push(LinearRow { coeffs: vec![(1, -1.0)], rhs: -1.0 });
        assert_eq!(domain_propagate(&inst, &HashMap::from([(0, 1.0)])), Propagation::Infeasible);
        assert_eq!(domain_propagate(&inst, &HashMap::from([(0, 0.0)])), Propagation::Feasible);
    }

    #[test]
    fn quadratic_row_interval_check() {
        // x0 * x1 >= 0.5 written as -x0 x1 <= -0.5
        let mut inst = MiqcqpInstance::new("p", 2);
        inst.integer = vec![true, false];
        inst.quad_constraints.push(QuadConstraint {
            q: SymSparseMatrix::from_triplets(2, [(0, 1, -0.5)]),
            a: vec![0.0, 0.0],
            rhs: -0.5,
        });
        assert_eq!(domain_propagate(&inst, &HashMap::from([(0, 0.0)])), Propagation::Infeasible);
        assert_eq!(domain_propagate(&inst, &HashMap::from([(0, 1.0)])), Propagation::Unknown);
    }
}
