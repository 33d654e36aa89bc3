//! End-to-end run: classify, dispatch to the class heuristic, then refine
//! the incumbent with parallel local branching within one global budget.

use crate::convexify::{build_original, Shifts};
use crate::heuristics::{
    fixed_point_miqp, race_pumps, random_flip, random_flip_project, HeuristicError, PumpConfig, PumpOutcome, RunContext,
    Termination,
};
use crate::instance::{check_feasible, classify, evaluate, normalize, MiqcqpInstance, ProblemClass};
use crate::localbranch::{run_parallel_lb, LbOptions, LbStop, LocalBranchError, PartitionScheme};
use crate::metrics::IncumbentTrace;
use crate::solver::{Goal, SolveRequest, SolverBackend, ACCEPT_TOL};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::{Duration, Instant};

/// Share of the global budget available to the heuristic phase.
pub const PUMP_BUDGET_FRACTION: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub time_limit_s: f64,
    pub workers: usize,
    pub pump: PumpConfig,
    pub scheme: PartitionScheme,
    /// Skip the local-branching phase.
    pub no_local_branching: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            time_limit_s: 300.0,
            workers: 4,
            pump: PumpConfig::default(),
            scheme: PartitionScheme::default(),
            no_local_branching: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    RandomFlip,
    RandomFlipProject,
    FixedPoint,
    PumpRace,
    /// Branch-and-bound search for a first feasible point after the class
    /// heuristic failed.
    Fallback,
}

/// Heuristic chosen for an instance: box-constrained problems flip,
/// linearly constrained ones flip-and-project (or iterate the fixed point
/// when a perturbed continuous variable exists), quadratically constrained
/// ones race the pumps.
pub fn dispatch(inst: &MiqcqpInstance, pump: &PumpConfig) -> Method {
    match classify(inst) {
        ProblemClass::Mibqp => Method::RandomFlip,
        ProblemClass::Miqp => {
            let norm = normalize(inst);
            let shifts = Shifts::compute(&norm.inst, pump.shift_rule);
            if shifts.perturbed_continuous(&norm.inst).is_empty() {
                Method::RandomFlipProject
            } else {
                Method::FixedPoint
            }
        }
        ProblemClass::Miqcp => Method::PumpRace,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbSummary {
    pub improvements: usize,
    pub depth: usize,
    pub subproblems: usize,
    pub resplits: usize,
    pub rlbc_rounds: usize,
    pub stopped_by: LbStop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub instance: String,
    pub class: ProblemClass,
    pub method: Method,
    pub found: bool,
    pub x: Option<Vec<f64>>,
    /// Objective in minimization form.
    pub objective: Option<f64>,
    /// Objective in the instance's original sense.
    pub reported_objective: Option<f64>,
    /// Incumbents in minimization form, seconds from the start of the run.
    pub trace: IncumbentTrace,
    pub pump_terminated_by: Option<Termination>,
    pub pump_time_s: f64,
    pub local_branching: Option<LbSummary>,
    pub wall_time_s: f64,
}

fn pump_phase(inst: &MiqcqpInstance, method: Method, cfg: &PumpConfig, ctx: &RunContext) -> Result<PumpOutcome, HeuristicError> {
    match method {
        Method::RandomFlip => random_flip(inst, cfg, ctx),
        Method::RandomFlipProject => random_flip_project(inst, cfg, ctx),
        Method::FixedPoint => fixed_point_miqp(inst, cfg, ctx),
        Method::PumpRace => race_pumps(inst, cfg, ctx).map(|r| r.best),
        Method::Fallback => unreachable!("fallback is not a pump"),
    }
}

/// Runs the full pipeline on `inst` with the given backend.
pub fn run_pipeline(inst: &MiqcqpInstance, cfg: &PipelineConfig, backend: Arc<dyn SolverBackend>) -> PipelineResult {
    let start = Instant::now();
    let total = RunContext {
        backend,
        start,
        deadline: start + Duration::from_secs_f64(cfg.time_limit_s.max(0.0)),
        cancel: None,
    };
    let mut pump_ctx = total.clone();
    pump_ctx.deadline = start + Duration::from_secs_f64(cfg.time_limit_s * PUMP_BUDGET_FRACTION);
    let class = classify(inst);
    let mut method = dispatch(inst, &cfg.pump);
    let mut trace = IncumbentTrace::new(total.horizon());
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut pump_terminated_by = None;
    match pump_phase(inst, method, &cfg.pump, &pump_ctx) {
        Ok(out) => {
            pump_terminated_by = Some(out.terminated_by);
            trace = trace.merged(&out.trace);
            incumbent = out.x_star.zip(out.objective);
        }
        Err(e) => log::warn!("{method:?} failed: {e}"),
    }
    if incumbent.is_none() && !total.expired() {
        method = Method::Fallback;
        let limit = 0.5 * total.remaining();
        let req = SolveRequest::new(build_original(inst), limit).goal(Goal::FirstFeasible).seed(cfg.pump.seed);
        let r = total.backend.solve(&req);
        if let Some(x) = r.x.filter(|_| r.status.has_solution()) {
            let x = x[..inst.n].to_vec();
            if check_feasible(inst, &x, ACCEPT_TOL) {
                let f = evaluate(inst, &x).objective;
                trace.record(total.elapsed(), f);
                incumbent = Some((x, f));
            }
        }
    }
    let pump_time_s = total.elapsed();
    let mut local_branching = None;
    if let Some((x, f)) = incumbent.as_mut() {
        if !cfg.no_local_branching && !total.expired() {
            let opts = LbOptions { workers: cfg.workers, scheme: cfg.scheme.clone(), subproblem_limit_s: None };
            match run_parallel_lb(inst, x, &total, &opts) {
                Ok(lb) => {
                    local_branching = Some(LbSummary {
                        improvements: lb.trace.events.len().saturating_sub(1),
                        depth: lb.depth,
                        subproblems: lb.subproblems,
                        resplits: lb.resplits,
                        rlbc_rounds: lb.rlbc_rounds,
                        stopped_by: lb.stopped_by,
                    });
                    trace = trace.merged(&lb.trace);
                    if lb.objective < *f {
                        *x = lb.x;
                        *f = lb.objective;
                    }
                }
                Err(LocalBranchError::NoBinaries) => {}
                Err(e) => log::warn!("local branching skipped: {e}"),
            }
        }
    }
    let (x, objective) = match incumbent {
        Some((x, f)) => (Some(x), Some(f)),
        None => (None, None),
    };
    PipelineResult {
        instance: inst.name.clone(),
        class,
        method,
        found: x.is_some(),
        reported_objective: objective.map(|f| inst.reported_objective(f)),
        x,
        objective,
        trace,
        pump_terminated_by,
        pump_time_s,
        local_branching,
        wall_time_s: total.elapsed(),
    }
}
