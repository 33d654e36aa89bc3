//! Two-projection and relaxing-projection pumps for quadratically
//! constrained problems, and their race.

use super::{initial_u_hat, polish, relaxation_point, HeuristicError, Prepared, PumpConfig, PumpOutcome, RunContext, Termination};
use crate::convexify::{build_approx, build_fpr1, build_fpr2, build_l1_projection, build_original, UHat};
use crate::instance::{check_feasible, classify, MiqcqpInstance, ProblemClass};
use crate::solver::{local_solve, Goal, NlpOptions, ACCEPT_TOL};
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

const DEFAULT_MAX_ITER: usize = 10;
/// Objective value of FPR1/FPR2 treated as zero.
const ZERO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pump {
    TwoProjection,
    RelaxingProjection,
}

/// Signal shared by racing pumps: set once either finds a feasible point.
#[derive(Debug, Clone, Default)]
pub struct PeerLink(Arc<AtomicBool>);

impl PeerLink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn signal(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_signalled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

/// Allows one more iteration after the peer has signalled.
struct PeerWatch<'a> {
    link: Option<&'a PeerLink>,
    grace_used: bool,
}

impl PeerWatch<'_> {
    fn should_stop(&mut self) -> bool {
        match self.link {
            Some(l) if l.is_signalled() => std::mem::replace(&mut self.grace_used, true),
            _ => false,
        }
    }
}

/// State shared by both pumps.
struct PumpRun<'a> {
    inst: &'a MiqcqpInstance,
    prep: Prepared,
    x0: Vec<f64>,
    u_hat: UHat,
    all: Vec<usize>,
    out: PumpOutcome,
}

impl<'a> PumpRun<'a> {
    fn start(inst: &'a MiqcqpInstance, cfg: &PumpConfig, ctx: &RunContext) -> Result<Self, HeuristicError> {
        if classify(inst) != ProblemClass::Miqcp {
            return Err(HeuristicError::WrongClass { expected: "MIQCP" });
        }
        let prep = Prepared::new(inst, cfg.shift_rule);
        let x0 = relaxation_point(prep.inst(), ctx, cfg);
        let u_hat = initial_u_hat(prep.inst(), &x0);
        let all = (0..inst.n).collect();
        Ok(Self { inst, prep, x0, u_hat, all, out: PumpOutcome::empty(ctx.horizon()) })
    }

    fn norm(&self) -> &MiqcqpInstance {
        self.prep.inst()
    }

    /// `û := 2û` clamped to `u`; false when nothing changed.
    fn double(&mut self) -> bool {
        let next = UHat::clamp_to_upper(self.u_hat.values.iter().map(|v| 2.0 * v).collect(), self.norm());
        if next == self.u_hat {
            return false;
        }
        self.u_hat = next;
        self.out.u_doublings += 1;
        true
    }

    /// `û_i := α û_i + (1 − α) x_i` on continuous variables.
    fn relax_towards(&mut self, x: &[f64], alpha: f64) {
        let norm = self.prep.inst();
        let v = (0..norm.n)
            .map(|j| {
                if norm.integer[j] {
                    self.u_hat.values[j]
                } else {
                    alpha * self.u_hat.values[j] + (1.0 - alpha) * x[j]
                }
            })
            .collect();
        self.u_hat = UHat::clamp_to_upper(v, norm);
    }

    /// Integer-fixed local polish and acceptance; records the incumbent.
    fn conclude(&mut self, y: &[f64], ctx: &RunContext, cfg: &PumpConfig, peer: Option<&PeerLink>) -> bool {
        let y = polish(self.prep.inst(), y, ctx.local_deadline(cfg), ctx.cancel.as_ref());
        let Some((x, f)) = self.prep.accept(self.inst, &y) else {
            return false;
        };
        self.out.trace.record(ctx.elapsed(), f);
        self.out.history.push(f);
        self.out.x_star = Some(x);
        self.out.objective = Some(f);
        self.out.terminated_by = Termination::Converged;
        if let Some(p) = peer {
            p.signal();
        }
        true
    }

    fn normalized_feasible(&self, y: &[f64]) -> bool {
        let mut y = y.to_vec();
        for j in self.norm().integer_indices() {
            y[j] = y[j].round();
        }
        check_feasible(self.norm(), &y, ACCEPT_TOL)
    }
}

/// Runs `body` once per iteration until it reports completion, handling the
/// budget, the iteration cap and the peer signal.
fn drive<'a>(
    mut run: PumpRun<'a>,
    cfg: &PumpConfig,
    ctx: &RunContext,
    peer: Option<&PeerLink>,
    mut body: impl FnMut(&mut PumpRun<'a>) -> Result<bool, HeuristicError>,
) -> Result<PumpOutcome, HeuristicError> {
    let mut watch = PeerWatch { link: peer, grace_used: false };
    run.out.terminated_by = Termination::MaxIter;
    for _ in 0..cfg.max_iter.unwrap_or(DEFAULT_MAX_ITER) {
        if watch.should_stop() {
            run.out.terminated_by = Termination::PeerWin;
            return Ok(run.out);
        }
        if ctx.expired() {
            run.out.terminated_by = Termination::TimeBudget;
            return Ok(run.out);
        }
        run.out.iterations += 1;
        if body(&mut run)? {
            return Ok(run.out);
        }
    }
    Ok(run.out)
}

/// Two-projection method: alternately project `x^(0)` onto `Approx(û)` and
/// the result onto the original feasible set, doubling `û` when the first
/// projection fails and relaxing it towards `x^(1)` when the second does.
pub fn two_projection(
    inst: &MiqcqpInstance,
    cfg: &PumpConfig,
    ctx: &RunContext,
    peer: Option<&PeerLink>,
) -> Result<PumpOutcome, HeuristicError> {
    let run = PumpRun::start(inst, cfg, ctx)?;
    drive(run, cfg, ctx, peer, |run| {
        let n = run.norm().n;
        let approx = build_approx(run.norm(), &run.u_hat, &run.prep.shifts)?;
        let p1 = build_l1_projection(&approx, &run.x0, &run.all);
        let r1 = ctx.solve(p1, Goal::FirstFeasible, ctx.sub_limit(cfg), cfg.seed);
        if !r1.has_solution() {
            log::debug!("approximation projection failed ({}); doubling û", r1.status);
            if !run.double() {
                run.out.terminated_by = Termination::Failed;
                return Ok(true);
            }
            return Ok(false);
        }
        let x1 = r1.x.expect("solution")[..n].to_vec();
        let x2 = if run.normalized_feasible(&x1) {
            x1
        } else {
            let p2 = build_l1_projection(&build_original(run.norm()), &x1, &run.all);
            let r2 = ctx.solve(p2, Goal::FirstFeasible, ctx.sub_limit(cfg), cfg.seed);
            if !r2.has_solution() {
                run.relax_towards(&x1, cfg.alpha);
                return Ok(false);
            }
            r2.x.expect("solution")[..n].to_vec()
        };
        if run.conclude(&x2, ctx, cfg, peer) {
            return Ok(true);
        }
        run.relax_towards(&x2, cfg.alpha);
        Ok(false)
    })
}

/// Relaxing projection method: minimize the deficiency `Σ δ` of FPR1; when
/// it is positive, fix the integers and locally minimize the row slack of
/// FPR2, then relax `û` towards the FPR2 point.
pub fn relaxing_projection(
    inst: &MiqcqpInstance,
    cfg: &PumpConfig,
    ctx: &RunContext,
    peer: Option<&PeerLink>,
) -> Result<PumpOutcome, HeuristicError> {
    let run = PumpRun::start(inst, cfg, ctx)?;
    drive(run, cfg, ctx, peer, |run| {
        let n = run.norm().n;
        let fpr1 = build_fpr1(run.norm(), &run.u_hat, &run.prep.shifts)?;
        let r1 = ctx.solve(fpr1, Goal::ProveOptimal, ctx.sub_limit(cfg), cfg.seed);
        if !r1.has_solution() {
            log::debug!("FPR1 failed ({}); doubling û", r1.status);
            if !run.double() {
                run.out.terminated_by = Termination::Failed;
                return Ok(true);
            }
            return Ok(false);
        }
        let sum_delta = r1.objective.unwrap_or(f64::INFINITY);
        let x1 = r1.x.expect("solution")[..n].to_vec();
        if (sum_delta <= ZERO_TOL || run.normalized_feasible(&x1)) && run.conclude(&x1, ctx, cfg, peer) {
            return Ok(true);
        }
        let fixes: Vec<(usize, f64)> = run.norm().integer_indices().into_iter().map(|j| (j, x1[j].round())).collect();
        let fpr2 = build_fpr2(run.norm()).with_fixed(&fixes);
        let mut start = x1.clone();
        for &(j, v) in &fixes {
            start[j] = v;
        }
        // slack warm start s_k = (violation_k)+
        let start = fpr2.complete(&start);
        let out = local_solve(&fpr2, &start, &NlpOptions::default(), ctx.local_deadline(cfg), ctx.cancel.as_ref());
        let x2 = out.x[..n].to_vec();
        if (out.objective <= ZERO_TOL || run.normalized_feasible(&x2)) && run.conclude(&x2, ctx, cfg, peer) {
            return Ok(true);
        }
        run.relax_towards(&x2, cfg.alpha);
        Ok(false)
    })
}

/// Both pump outcomes and the selected one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceOutcome {
    /// Better feasible point of the two, with the merged trace.
    pub best: PumpOutcome,
    pub winner: Option<Pump>,
    pub two_projection: PumpOutcome,
    pub relaxing_projection: PumpOutcome,
}

/// Runs both pumps; once one finds a feasible point the other stops after
/// at most one more iteration. Deterministic mode runs the relaxing
/// projection first, then the two-projection method.
pub fn race_pumps(inst: &MiqcqpInstance, cfg: &PumpConfig, ctx: &RunContext) -> Result<RaceOutcome, HeuristicError> {
    if classify(inst) != ProblemClass::Miqcp {
        return Err(HeuristicError::WrongClass { expected: "MIQCP" });
    }
    let link = PeerLink::new();
    let (relaxing, two) = if cfg.deterministic {
        let r = relaxing_projection(inst, cfg, ctx, Some(&link));
        let t = two_projection(inst, cfg, ctx, Some(&link));
        (r, t)
    } else {
        std::thread::scope(|s| {
            let h = s.spawn(|| two_projection(inst, cfg, ctx, Some(&link)));
            let r = relaxing_projection(inst, cfg, ctx, Some(&link));
            (r, h.join().expect("pump thread panicked"))
        })
    };
    let failed = |e: HeuristicError| {
        log::warn!("pump failed: {e}");
        PumpOutcome::empty(ctx.horizon())
    };
    let (relaxing, two) = match (relaxing, two) {
        (Err(e), Err(_)) => return Err(e),
        (r, t) => (r.unwrap_or_else(failed), t.unwrap_or_else(failed)),
    };
    let winner = match (relaxing.objective, two.objective) {
        (Some(a), Some(b)) if b < a => Some(Pump::TwoProjection),
        (Some(_), _) => Some(Pump::RelaxingProjection),
        (None, Some(_)) => Some(Pump::TwoProjection),
        (None, None) => None,
    };
    let mut best = match winner {
        Some(Pump::TwoProjection) => two.clone(),
        _ => relaxing.clone(),
    };
    best.trace = relaxing.trace.merged(&two.trace);
    Ok(RaceOutcome { best, winner, two_projection: two, relaxing_projection: relaxing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate, GenParams};
    use crate::instance::{LinearRow, QuadConstraint, SymSparseMatrix};
    use crate::solver::brute_force;
    use crate::spectral::ShiftRule;

    fn ctx() -> RunContext {
        RunContext::new(60.0)
    }

    /// Binary z >= 0.5, continuous x in [0, 4], -x^2 + 4z <= 3, min (x - 0.1)^2.
    fn doubling_instance() -> MiqcqpInstance {
        let mut inst = MiqcqpInstance::new("dbl", 2);
        inst.integer = vec![true, false];
        inst.upper = vec![1.0, 4.0];
        inst.objective.q = SymSparseMatrix::from_triplets(2, [(1, 1, 1.0)]);
        inst.objective.a = vec![0.0, -0.2];
        inst.objective.constant = 0.01;
        inst.linear.push(LinearRow { coeffs: vec![(0, -1.0)], rhs: -0.5 });
        inst.quad_constraints.push(QuadConstraint {
            q: SymSparseMatrix::from_triplets(2, [(1, 1, -1.0)]),
            a: vec![4.0, 0.0],
            rhs: 3.0,
        });
        inst
    }

    fn classic() -> PumpConfig {
        PumpConfig { shift_rule: ShiftRule::Classic, ..Default::default() }
    }

    #[test]
    fn convex_miqcp_needs_one_iteration() {
        let mut inst = MiqcqpInstance::new("cv", 2);
        inst.integer = vec![true, false];
        inst.upper = vec![1.0, 2.0];
        inst.objective.a = vec![-1.0, -1.0];
        inst.quad_constraints.push(QuadConstraint {
            q: SymSparseMatrix::diagonal(&[1.0, 1.0]),
            a: vec![0.0, 0.0],
            rhs: 2.0,
        });
        for out in [
            two_projection(&inst, &PumpConfig::default(), &ctx(), None).unwrap(),
            relaxing_projection(&inst, &PumpConfig::default(), &ctx(), None).unwrap(),
        ] {
            assert_eq!(out.iterations, 1, "{out:?}");
            assert_eq!(out.terminated_by, Termination::Converged);
            assert!(check_feasible(&inst, out.x_star.as_ref().unwrap(), 1e-6));
        }
    }

    #[test]
    fn doubling_recorded_once() {
        let inst = doubling_instance();
        let out = two_projection(&inst, &classic(), &ctx(), None).unwrap();
        assert_eq!(out.u_doublings, 1, "{out:?}");
        let x = out.x_star.unwrap();
        assert!(check_feasible(&inst, &x, 1e-6));
        // polish reaches the boundary x = 1 of the feasible interval [1, 4]
        let oracle = brute_force(&inst, 3001);
        assert!((out.objective.unwrap() - oracle.objective.unwrap()).abs() < 1e-3, "{x:?}");
        let r = relaxing_projection(&inst, &classic(), &ctx(), None).unwrap();
        assert!(r.found());
    }

    #[test]
    fn peer_win_within_one_iteration() {
        let inst = doubling_instance();
        let cfg = PumpConfig { deterministic: true, ..classic() };
        let race = race_pumps(&inst, &cfg, &ctx()).unwrap();
        assert_eq!(race.winner, Some(Pump::RelaxingProjection));
        assert_eq!(race.two_projection.terminated_by, Termination::PeerWin);
        assert_eq!(race.two_projection.iterations, 1);
    }

    #[test]
    fn deterministic_race_is_repeatable() {
        let p = GenParams { n_binary: 4, n_general: 1, n_continuous: 3, m1: 2, m2: 2, seed: 11, ..Default::default() };
        let (inst, _) = generate(&p);
        let cfg = PumpConfig { deterministic: true, seed: 3, ..Default::default() };
        let first = race_pumps(&inst, &cfg, &ctx()).unwrap();
        for _ in 0..4 {
            let again = race_pumps(&inst, &cfg, &ctx()).unwrap();
            assert_eq!(again.winner, first.winner);
            assert_eq!(again.best.x_star, first.best.x_star);
        }
    }

    #[test]
    fn race_returns_better_of_both() {
        let p = GenParams { n_binary: 3, n_general: 0, n_continuous: 3, m1: 1, m2: 1, seed: 4, ..Default::default() };
        let (inst, _) = generate(&p);
        let race = race_pumps(&inst, &PumpConfig::default(), &ctx()).unwrap();
        let objs: Vec<f64> = [&race.two_projection, &race.relaxing_projection]
            .iter()
            .filter_map(|o| o.objective)
            .collect();
        if let Some(m) = objs.iter().copied().reduce(f64::min) {
            assert_eq!(race.best.objective, Some(m));
            assert!(check_feasible(&inst, race.best.x_star.as_ref().unwrap(), 1e-6));
        }
    }

    #[test]
    fn fpr2_warm_start_is_feasible() {
        let p = GenParams { n_binary: 3, n_general: 1, n_continuous: 3, m1: 3, m2: 1, seed: 2, ..Default::default() };
        let (inst, _) = generate(&p);
        let prep = Prepared::new(&inst, ShiftRule::Safe);
        let fpr2 = build_fpr2(prep.inst());
        for k in 0..5 {
            let mut y = prep.inst().box_center();
            y[k % inst.n] = prep.inst().upper[k % inst.n];
            let full = fpr2.complete(&y);
            assert!(fpr2.is_feasible(&full, 1e-9));
        }
    }
}
