//! Random flipping for box-constrained problems and flip-and-project for
//! linearly constrained ones.

use super::propagate::{domain_propagate, Propagation};
use super::{polish, HeuristicError, Prepared, PumpConfig, PumpOutcome, RunContext, Termination};
use crate::convexify::{build_l1_projection, build_original, build_relaxation, ModelIR};
use crate::instance::{classify, MiqcqpInstance, ProblemClass};
use crate::solver::{Goal, SolveStatus};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

const FRACTIONAL_TOL: f64 = 1e-6;

/// Point with a cached `Q x` for O(column) objective updates.
struct FlipState<'a> {
    inst: &'a MiqcqpInstance,
    x: Vec<f64>,
    qx: Vec<f64>,
}

impl<'a> FlipState<'a> {
    fn new(inst: &'a MiqcqpInstance, x: Vec<f64>) -> Self {
        let qx = inst.objective.q.mul_vec(&x);
        Self { inst, x, qx }
    }

    /// Objective change from setting `x_i := v`.
    fn change(&self, i: usize, v: f64) -> f64 {
        let d = v - self.x[i];
        let qii = self.inst.objective.q.get(i, i);
        qii * d * d + 2.0 * d * self.qx[i] + self.inst.objective.a[i] * d
    }

    fn set(&mut self, i: usize, v: f64) {
        let d = v - self.x[i];
        if d == 0.0 {
            return;
        }
        for (k, q) in self.inst.objective.q.column(i) {
            self.qx[k] += q * d;
        }
        self.x[i] = v;
    }
}

/// Integer indices with fractional values, in seeded random order.
fn shuffled_fractional(inst: &MiqcqpInstance, x: &[f64], seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = inst
        .integer_indices()
        .into_iter()
        .filter(|&i| (x[i] - x[i].round()).abs() > FRACTIONAL_TOL)
        .collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Continuous relaxation optimum of `model` on its first `n` variables.
pub(super) fn relaxed_point(model: &ModelIR, n: usize, cfg: &PumpConfig, ctx: &RunContext) -> Option<Vec<f64>> {
    let r = ctx.solve(model.continuous_relaxation(), Goal::ProveOptimal, ctx.sub_limit(cfg), cfg.seed);
    r.has_solution().then(|| r.x.expect("solution")[..n].to_vec())
}

/// Snaps integer coordinates already within tolerance of an integer and
/// clamps into the box.
fn tidy(inst: &MiqcqpInstance, x: &mut [f64]) {
    for j in 0..inst.n {
        x[j] = x[j].clamp(inst.lower[j], inst.upper[j]);
        if inst.integer[j] && (x[j] - x[j].round()).abs() <= FRACTIONAL_TOL {
            x[j] = x[j].round();
        }
    }
}

fn finish(prep: &Prepared, original: &MiqcqpInstance, y: &[f64], ctx: &RunContext, cfg: &PumpConfig) -> PumpOutcome {
    let y = polish(prep.inst(), y, ctx.local_deadline(cfg), ctx.cancel.as_ref());
    let mut out = PumpOutcome::empty(ctx.horizon());
    out.iterations = 1;
    match prep.accept(original, &y) {
        Some((x, f)) => {
            out.trace.record(ctx.elapsed(), f);
            out.history.push(f);
            out.x_star = Some(x);
            out.objective = Some(f);
            out.terminated_by = Termination::Converged;
        }
        None => out.terminated_by = Termination::Failed,
    }
    out
}

/// Random flip for box-constrained instances: solve the relaxed convex
/// approximation `Approx(u)`, then round each fractional integer (in seeded
/// random order) to the neighbour with the lower true objective.
pub fn random_flip(inst: &MiqcqpInstance, cfg: &PumpConfig, ctx: &RunContext) -> Result<PumpOutcome, HeuristicError> {
    if classify(inst) != ProblemClass::Mibqp {
        return Err(HeuristicError::WrongClass { expected: "MIBQP" });
    }
    let prep = Prepared::new(inst, cfg.shift_rule);
    let norm = prep.inst();
    let approx = build_relaxation(norm, &prep.shifts)?;
    let mut x = relaxed_point(&approx, norm.n, cfg, ctx).unwrap_or_else(|| {
        log::warn!("relaxation failed; rounding from the box center");
        norm.box_center()
    });
    tidy(norm, &mut x);
    let mut state = FlipState::new(norm, x);
    for i in shuffled_fractional(norm, &state.x, cfg.seed) {
        let (down, up) = (state.x[i].floor(), state.x[i].ceil());
        let v = if state.change(i, down) <= state.change(i, up) { down } else { up };
        state.set(i, v);
    }
    Ok(finish(&prep, inst, &state.x, ctx, cfg))
}

/// Flips the fractional integers of `x` guided by domain propagation and
/// projects the result onto the instance's feasible set in the ℓ1 norm.
///
/// Returns `Ok(None)` when the projection produced no point within its
/// time limit.
pub(crate) fn flip_and_project(
    norm: &MiqcqpInstance,
    x: Vec<f64>,
    seed: u64,
    cfg: &PumpConfig,
    ctx: &RunContext,
) -> Result<Option<Vec<f64>>, HeuristicError> {
    let mut x = x;
    tidy(norm, &mut x);
    let mut state = FlipState::new(norm, x);
    let mut fixes: HashMap<usize, f64> = HashMap::new();
    for i in shuffled_fractional(norm, &state.x, seed) {
        let (down, up) = (state.x[i].floor(), state.x[i].ceil());
        let status = |v: f64, fixes: &mut HashMap<usize, f64>| {
            fixes.insert(i, v);
            let s = domain_propagate(norm, fixes);
            fixes.remove(&i);
            s
        };
        let down_ok = status(down, &mut fixes) != Propagation::Infeasible;
        let up_ok = status(up, &mut fixes) != Propagation::Infeasible;
        let v = match (down_ok, up_ok) {
            (true, false) => down,
            (false, true) => up,
            _ if state.change(i, down) <= state.change(i, up) => down,
            _ => up,
        };
        state.set(i, v);
        fixes.insert(i, v);
    }
    let all: Vec<usize> = (0..norm.n).collect();
    let proj = build_l1_projection(&build_original(norm), &state.x, &all);
    let r = ctx.solve(proj, Goal::ProveOptimal, ctx.sub_limit(cfg), seed);
    match r.status {
        SolveStatus::Infeasible => Err(HeuristicError::Infeasible),
        _ if r.has_solution() => Ok(Some(r.x.expect("solution")[..norm.n].to_vec())),
        _ => Ok(None),
    }
}

/// Random flip and project for linearly constrained instances: relaxed
/// `Approx(u)`, propagation-guided flipping, then an ℓ1 projection onto the
/// feasible set.
pub fn random_flip_project(inst: &MiqcqpInstance, cfg: &PumpConfig, ctx: &RunContext) -> Result<PumpOutcome, HeuristicError> {
    if classify(inst) != ProblemClass::Miqp {
        return Err(HeuristicError::WrongClass { expected: "MIQP" });
    }
    let prep = Prepared::new(inst, cfg.shift_rule);
    let norm = prep.inst();
    let approx = build_relaxation(norm, &prep.shifts)?;
    let x = relaxed_point(&approx, norm.n, cfg, ctx).unwrap_or_else(|| norm.box_center());
    match flip_and_project(norm, x, cfg.seed, cfg, ctx)? {
        Some(y) => Ok(finish(&prep, inst, &y, ctx, cfg)),
        None => {
            let mut out = PumpOutcome::empty(ctx.horizon());
            out.iterations = 1;
            out.terminated_by = Termination::TimeBudget;
            Ok(out)
        }
    }
}
