//! Primal heuristics: random flipping for box-constrained problems,
//! flip-and-project with fixed-point updates for linearly constrained
//! problems, and the two projection pumps for quadratically constrained
//! problems together with their parallel race.

mod fixed_point;
mod flip;
mod propagate;
mod pumps;

pub use fixed_point::{
    fixed_point_continuous, fixed_point_miqp, objective_gradient_fd, stationarity_residual, FixedPointRun,
};
pub use flip::{random_flip, random_flip_project};
pub use propagate::{domain_propagate, Propagation};
pub use pumps::{race_pumps, relaxing_projection, two_projection, PeerLink, RaceOutcome, Pump};

use crate::convexify::{build_original, ModelIR, Shifts, UHat};
use crate::instance::{check_feasible, evaluate, normalize, MiqcqpInstance, NormalizedInstance};
use crate::metrics::IncumbentTrace;
use crate::solver::{
    local_solve, CancelToken, Goal, InternalBackend, NlpOptions, SolveRequest, SolveResult, SolverBackend,
    ACCEPT_TOL, DEFAULT_SUBPROBLEM_LIMIT_S,
};
use crate::spectral::ShiftRule;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HeuristicError {
    #[error("heuristic expects a {expected} instance")]
    WrongClass { expected: &'static str },
    #[error("the instance has no feasible point")]
    Infeasible,
    #[error(transparent)]
    Convexify(#[from] crate::convexify::ConvexifyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpConfig {
    /// Weight of the previous `û` in fixed-point updates, in `(0, 1]`.
    pub alpha: f64,
    /// Iteration cap; `None` uses the algorithm default (20 for the
    /// fixed-point method, 10 for the projection pumps).
    pub max_iter: Option<usize>,
    pub subproblem_time_limit_s: f64,
    /// Minimum objective decrease counted as an improvement.
    pub epsilon_improve: f64,
    pub seed: u64,
    pub shift_rule: ShiftRule,
    /// Run the pump race sequentially (relaxing projection first).
    pub deterministic: bool,
}

impl Default for PumpConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            max_iter: None,
            subproblem_time_limit_s: DEFAULT_SUBPROBLEM_LIMIT_S,
            epsilon_improve: 1e-6,
            seed: 0,
            shift_rule: ShiftRule::Safe,
            deterministic: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    MaxIter,
    TimeBudget,
    /// The racing peer found a solution first.
    PeerWin,
    /// A required subproblem failed (e.g. the projection is infeasible).
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpOutcome {
    /// Feasible point in original coordinates.
    pub x_star: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub trace: IncumbentTrace,
    pub iterations: usize,
    pub terminated_by: Termination,
    /// Number of `û` doublings after failed convex subproblems.
    pub u_doublings: usize,
    /// Objective recorded at each accepted iteration.
    pub history: Vec<f64>,
}

impl PumpOutcome {
    fn empty(horizon: f64) -> Self {
        Self {
            x_star: None,
            objective: None,
            trace: IncumbentTrace::new(horizon),
            iterations: 0,
            terminated_by: Termination::Failed,
            u_doublings: 0,
            history: Vec::new(),
        }
    }

    pub fn found(&self) -> bool {
        self.x_star.is_some()
    }
}

/// Shared time budget, backend and cancellation for a heuristic run.
#[derive(Clone)]
pub struct RunContext {
    pub backend: Arc<dyn SolverBackend>,
    /// Trace times are measured from here.
    pub start: Instant,
    pub deadline: Instant,
    pub cancel: Option<CancelToken>,
}

impl RunContext {
    /// Internal backend with a budget starting now.
    pub fn new(budget_s: f64) -> Self {
        let start = Instant::now();
        Self {
            backend: Arc::new(InternalBackend),
            start,
            deadline: start + Duration::from_secs_f64(budget_s.max(0.0)),
            cancel: None,
        }
    }

    pub fn with_backend(mut self, backend: Arc<dyn SolverBackend>) -> Self {
        self.backend = backend;
        self
    }

    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    pub fn remaining(&self) -> f64 {
        self.deadline.saturating_duration_since(Instant::now()).as_secs_f64()
    }

    pub fn horizon(&self) -> f64 {
        (self.deadline - self.start).as_secs_f64()
    }

    pub fn expired(&self) -> bool {
        self.remaining() <= 0.0 || self.cancel.as_ref().is_some_and(|c| c.is_cancelled())
    }

    /// Time limit for the next subproblem.
    pub fn sub_limit(&self, cfg: &PumpConfig) -> f64 {
        cfg.subproblem_time_limit_s.min(self.remaining())
    }

    fn solve(&self, model: ModelIR, goal: Goal, limit: f64, seed: u64) -> SolveResult {
        let mut req = SolveRequest::new(model, limit.max(1e-3)).goal(goal).seed(seed);
        req.cancel = self.cancel.clone();
        self.backend.solve(&req)
    }

    /// Deadline for a local solve limited like a subproblem.
    fn local_deadline(&self, cfg: &PumpConfig) -> Instant {
        Instant::now() + Duration::from_secs_f64(self.sub_limit(cfg))
    }
}

/// Normalized instance and its perturbation shifts.
pub(crate) struct Prepared {
    pub norm: NormalizedInstance,
    pub shifts: Shifts,
}

impl Prepared {
    pub fn new(inst: &MiqcqpInstance, rule: ShiftRule) -> Self {
        let norm = normalize(inst);
        let shifts = Shifts::compute(&norm.inst, rule);
        Self { norm, shifts }
    }

    pub fn inst(&self) -> &MiqcqpInstance {
        &self.norm.inst
    }

    /// Maps a normalized point back and keeps it only when it is feasible
    /// for the original instance.
    pub fn accept(&self, original: &MiqcqpInstance, y: &[f64]) -> Option<(Vec<f64>, f64)> {
        let mut x = self.norm.to_original(&y[..self.inst().n]);
        for j in original.integer_indices() {
            x[j] = x[j].round();
        }
        check_feasible(original, &x, ACCEPT_TOL).then(|| {
            let f = evaluate(original, &x).objective;
            (x, f)
        })
    }
}

/// Rounds integers of `y` and locally optimizes the continuous block of the
/// normalized instance; returns the better feasible of start and result.
pub(crate) fn polish(inst: &MiqcqpInstance, y: &[f64], deadline: Instant, cancel: Option<&CancelToken>) -> Vec<f64> {
    let mut y = y[..inst.n].to_vec();
    let ints = inst.integer_indices();
    for &j in &ints {
        y[j] = y[j].round();
    }
    if ints.len() == inst.n {
        return y;
    }
    let fixes: Vec<(usize, f64)> = ints.iter().map(|&j| (j, y[j])).collect();
    let model = build_original(inst).with_fixed(&fixes);
    let out = local_solve(&model, &y, &NlpOptions::default(), deadline, cancel);
    let start_ok = check_feasible(inst, &y, ACCEPT_TOL);
    let new_ok = check_feasible(inst, &out.x, ACCEPT_TOL);
    let f_start = evaluate(inst, &y).objective;
    let f_new = evaluate(inst, &out.x).objective;
    match (start_ok, new_ok) {
        (true, true) if f_new < f_start => out.x,
        (true, _) => y,
        (false, true) => out.x,
        (false, false) => y,
    }
}

/// `û_i = 2 x_i` on continuous variables and `u_i` on integers, clamped to
/// `[0, u]`.
pub(crate) fn initial_u_hat(inst: &MiqcqpInstance, x0: &[f64]) -> UHat {
    let v = (0..inst.n)
        .map(|i| if inst.integer[i] { inst.upper[i] } else { 2.0 * x0[i] })
        .collect();
    UHat::clamp_to_upper(v, inst)
}

/// Local solution of the continuous relaxation from the box center.
pub(crate) fn relaxation_point(inst: &MiqcqpInstance, ctx: &RunContext, cfg: &PumpConfig) -> Vec<f64> {
    let model = build_original(inst).continuous_relaxation();
    let out = local_solve(&model, &inst.box_center(), &NlpOptions::default(), ctx.local_deadline(cfg), ctx.cancel.as_ref());
    out.x
}
