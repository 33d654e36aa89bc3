//! Fixed-point updates of `û` for linearly constrained problems.

use super::flip::{flip_and_project, relaxed_point};
use super::{polish, HeuristicError, Prepared, PumpConfig, PumpOutcome, RunContext, Termination};
use crate::convexify::{build_approx, build_original, UHat};
use crate::instance::{classify, MiqcqpInstance, ProblemClass, SymSparseMatrix};
use crate::solver::{solve_convex, SolveRequest};
use serde::{Deserialize, Serialize};

const DEFAULT_MAX_ITER: usize = 20;

/// `û` cap for the fixed-point methods: `2u`, the largest value the target
/// `2x` can take.
fn doubled_upper(inst: &MiqcqpInstance) -> Vec<f64> {
    inst.upper.iter().map(|u| 2.0 * u).collect()
}

/// `û_j := α û_j + 2(1 − α) x_j` on continuous variables.
fn update(inst: &MiqcqpInstance, u_hat: &UHat, x: &[f64], alpha: f64) -> UHat {
    let v = (0..inst.n)
        .map(|j| {
            if inst.integer[j] {
                u_hat.values[j]
            } else {
                alpha * u_hat.values[j] + 2.0 * (1.0 - alpha) * x[j]
            }
        })
        .collect();
    UHat::clamped(v, &doubled_upper(inst))
}

/// Projection and fixed-point iterations: repeatedly flip-and-project the
/// relaxed `Approx(û)` and, while the true objective improves by more than
/// `epsilon_improve`, move `û` towards `2x` on the continuous variables.
pub fn fixed_point_miqp(inst: &MiqcqpInstance, cfg: &PumpConfig, ctx: &RunContext) -> Result<PumpOutcome, HeuristicError> {
    if classify(inst) != ProblemClass::Miqp {
        return Err(HeuristicError::WrongClass { expected: "MIQP" });
    }
    let prep = Prepared::new(inst, cfg.shift_rule);
    let norm = prep.inst();
    let max_iter = cfg.max_iter.unwrap_or(DEFAULT_MAX_ITER);
    let mut u_hat = UHat::clamped(norm.upper.clone(), &doubled_upper(norm));
    let mut out = PumpOutcome::empty(ctx.horizon());
    out.terminated_by = Termination::MaxIter;
    for _ in 0..max_iter {
        if ctx.expired() {
            out.terminated_by = Termination::TimeBudget;
            break;
        }
        out.iterations += 1;
        let approx = build_approx(norm, &u_hat, &prep.shifts)?;
        let x = relaxed_point(&approx, norm.n, cfg, ctx).unwrap_or_else(|| norm.box_center());
        let Some(y) = flip_and_project(norm, x, cfg.seed, cfg, ctx)? else {
            out.terminated_by = Termination::TimeBudget;
            break;
        };
        let y = polish(norm, &y, ctx.local_deadline(cfg), ctx.cancel.as_ref());
        let Some((x_orig, f)) = prep.accept(inst, &y) else {
            out.terminated_by = Termination::Failed;
            break;
        };
        if out.objective.is_some_and(|best| f >= best - cfg.epsilon_improve) {
            out.terminated_by = Termination::Converged;
            break;
        }
        out.trace.record(ctx.elapsed(), f);
        out.history.push(f);
        out.objective = Some(f);
        out.x_star = Some(x_orig);
        u_hat = update(norm, &u_hat, &y, cfg.alpha);
    }
    Ok(out)
}

/// Result of [`fixed_point_continuous`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointRun {
    /// Last `Approx(û)` minimizer in original coordinates.
    pub x: Vec<f64>,
    /// Final `û` in normalized coordinates.
    pub u_hat: Vec<f64>,
    pub iterations: usize,
    /// `max |û_j − 2 x_j|` over the perturbed continuous variables.
    pub residual: f64,
    pub converged: bool,
}

/// Iterates `û ← α û + 2(1 − α) x*(û)` with the integer variables fixed,
/// where `x*(û)` minimizes `Approx(û)`, until `û = 2x*` within `tol` on the
/// perturbed continuous variables. At such a point the continuous block is
/// a KKT point of the original objective.
pub fn fixed_point_continuous(
    inst: &MiqcqpInstance,
    fixes: &[(usize, f64)],
    cfg: &PumpConfig,
    max_iter: usize,
    tol: f64,
) -> Result<Option<FixedPointRun>, HeuristicError> {
    let prep = Prepared::new(inst, cfg.shift_rule);
    let norm = prep.inst();
    let fixes: Vec<(usize, f64)> = fixes.iter().map(|&(j, v)| (j, v - prep.norm.shift[j])).collect();
    let watched = prep.shifts.perturbed_continuous(norm);
    let mut u_hat = UHat::clamped(norm.upper.clone(), &doubled_upper(norm));
    for it in 1..=max_iter {
        let model = build_approx(norm, &u_hat, &prep.shifts)?.with_fixed(&fixes);
        let r = solve_convex(&SolveRequest::new(model, cfg.subproblem_time_limit_s));
        let Some(x) = r.x.filter(|_| r.status.has_solution()) else {
            return Ok(None);
        };
        let y = &x[..norm.n];
        let residual = watched
            .iter()
            .map(|&j| (u_hat.values[j] - 2.0 * y[j]).abs())
            .fold(0.0, f64::max);
        if residual <= tol || it == max_iter {
            return Ok(Some(FixedPointRun {
                x: prep.norm.to_original(y),
                u_hat: u_hat.values,
                iterations: it,
                residual,
                converged: residual <= tol,
            }));
        }
        u_hat = update(norm, &u_hat, y, cfg.alpha);
    }
    Ok(None)
}

/// Central finite-difference gradient of the objective.
pub fn objective_gradient_fd(inst: &MiqcqpInstance, x: &[f64]) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..inst.n)
        .map(|j| {
            let h = 1e-6 * x[j].abs().max(1.0);
            p[j] = x[j] + h;
            let fp = inst.objective.eval(&p);
            p[j] = x[j] - h;
            let fm = inst.objective.eval(&p);
            p[j] = x[j];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// First-order stationarity residual `max_j |x_j − P(x − ∇f(x))_j|` over the
/// continuous variables, where `P` projects onto the linear feasible set with
/// the integer variables fixed and `∇f` is a finite-difference gradient.
///
/// Zero exactly at KKT points. Returns `None` when the projection fails or
/// the instance has quadratic rows.
pub fn stationarity_residual(inst: &MiqcqpInstance, x: &[f64]) -> Option<f64> {
    if inst.m1() > 0 {
        return None;
    }
    let g = objective_gradient_fd(inst, x);
    let w: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b).collect();
    let fixes: Vec<(usize, f64)> = inst.integer_indices().into_iter().map(|j| (j, x[j])).collect();
    let mut model = build_original(inst).with_fixed(&fixes).continuous_relaxation();
    model.objective.q = SymSparseMatrix::identity(inst.n);
    model.objective.linear = w.iter().enumerate().map(|(j, v)| (j, -2.0 * v)).collect();
    model.objective.constant = w.iter().map(|v| v * v).sum();
    model.convex = true;
    let r = solve_convex(&SolveRequest::new(model, 30.0));
    let z = r.x.filter(|_| r.status.has_solution())?;
    Some(inst.continuous_indices().into_iter().map(|j| (x[j] - z[j]).abs()).fold(0.0, f64::max))
}
