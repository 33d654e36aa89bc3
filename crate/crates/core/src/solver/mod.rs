//! Solver backends: the request/result contract, the internal
//! branch-and-bound backend, a local NLP solver for integer-fixed
//! subproblems, a brute-force oracle and an external-process adapter.

mod bnb;
mod brute;
pub mod conic;
mod external;
pub mod nlp;

pub use bnb::{is_convex_model, ACCEPT_TOL};
pub use brute::{brute_force, BruteForceError, BRUTE_MAX_ASSIGNMENTS};
pub use external::{
    parse_solution_file, write_solution_file, ExternalBackend, ParsedSolution, EXTERNAL_SOLVER_ENV,
};
pub use nlp::{local_solve, NlpOptions, NlpOutcome};

use crate::convexify::{build_original, ModelIR};
use crate::instance::MiqcqpInstance;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

/// Default per-subproblem time limit in seconds.
pub const DEFAULT_SUBPROBLEM_LIMIT_S: f64 = 10.0;

/// Cooperative cancellation flag shared between workers.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Goal {
    ProveOptimal,
    /// Return as soon as any feasible point is known.
    FirstFeasible,
    /// Improve until the time limit without insisting on a proof.
    BestWithinLimit,
}

#[derive(Debug, Clone)]
pub struct SolveRequest {
    pub model: ModelIR,
    pub time_limit_s: f64,
    pub goal: Goal,
    pub warm_start: Option<Vec<f64>>,
    pub seed: u64,
    /// Only points with objective strictly below this are accepted.
    pub cutoff: Option<f64>,
    pub cancel: Option<CancelToken>,
    /// Worker hint; the internal backend is single-threaded per request.
    pub workers: usize,
}

impl SolveRequest {
    pub fn new(model: ModelIR, time_limit_s: f64) -> Self {
        Self {
            model,
            time_limit_s,
            goal: Goal::ProveOptimal,
            warm_start: None,
            seed: 0,
            cutoff: None,
            cancel: None,
            workers: 1,
        }
    }

    pub fn goal(mut self, goal: Goal) -> Self {
        self.goal = goal;
        self
    }

    pub fn warm_start(mut self, x: Vec<f64>) -> Self {
        self.warm_start = Some(x);
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = Some(cutoff);
        self
    }

    pub fn cancel(mut self, token: CancelToken) -> Self {
        self.cancel = Some(token);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Feasible,
    /// No feasible point exists (below the cutoff, when one was given).
    Infeasible,
    /// The search stopped without a solution or a proof of infeasibility.
    TimeLimitNoSolution,
    Error,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible)
    }

    pub fn token(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::TimeLimitNoSolution => "time_limit_no_solution",
            SolveStatus::Error => "error",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for SolveStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "optimal" => Ok(SolveStatus::Optimal),
            "feasible" => Ok(SolveStatus::Feasible),
            "infeasible" => Ok(SolveStatus::Infeasible),
            "time_limit_no_solution" | "timelimit" | "time_limit" => Ok(SolveStatus::TimeLimitNoSolution),
            "error" => Ok(SolveStatus::Error),
            other => Err(format!("unknown status '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub dual_bound: Option<f64>,
    pub wall_time_s: f64,
    /// Branch-and-bound nodes, or enumerated points for the brute-force
    /// oracle.
    pub nodes: u64,
    /// The search stopped at the time limit or on cancellation rather than
    /// by exhausting its search space.
    #[serde(default)]
    pub timed_out: bool,
    /// Diagnostic text, e.g. captured output of an external process.
    pub message: Option<String>,
}

impl SolveResult {
    pub fn error(message: impl Into<String>, start: Instant) -> Self {
        Self {
            status: SolveStatus::Error,
            x: None,
            objective: None,
            dual_bound: None,
            wall_time_s: start.elapsed().as_secs_f64(),
            nodes: 0,
            timed_out: false,
            message: Some(message.into()),
        }
    }

    pub fn has_solution(&self) -> bool {
        self.status.has_solution() && self.x.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub convex_miqcqp: bool,
    pub milp: bool,
    pub nonconvex_miqcqp: bool,
    pub continuous_convex: bool,
    pub local_nlp: bool,
}

/// A solver usable by every heuristic. Implementations must be callable
/// concurrently from several workers on distinct requests.
pub trait SolverBackend: Send + Sync {
    fn name(&self) -> &str;
    fn capabilities(&self) -> Capabilities;
    fn solve(&self, req: &SolveRequest) -> SolveResult;
}

/// Desk-scale reference backend: branch-and-bound with conic relaxations.
#[derive(Debug, Clone, Copy, Default)]
pub struct InternalBackend;

impl SolverBackend for InternalBackend {
    fn name(&self) -> &str {
        "internal"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            convex_miqcqp: true,
            milp: true,
            nonconvex_miqcqp: true,
            continuous_convex: true,
            local_nlp: true,
        }
    }

    fn solve(&self, req: &SolveRequest) -> SolveResult {
        let start = Instant::now();
        let mut r = bnb::branch_and_bound(req, start);
        validate_result(&req.model, &mut r);
        r
    }
}

/// Branch-and-bound for a model whose relaxation is convex.
pub fn solve_convex(req: &SolveRequest) -> SolveResult {
    let start = Instant::now();
    if let Err(e) = conic::ConicTemplate::convex(&req.model) {
        return SolveResult::error(format!("model is not convex: {e}"), start);
    }
    let mut r = bnb::branch_and_bound(req, start);
    validate_result(&req.model, &mut r);
    r
}

/// Downgrades a result whose point does not satisfy the model.
pub(crate) fn validate_result(model: &ModelIR, r: &mut SolveResult) {
    if !r.status.has_solution() {
        if r.status == SolveStatus::Infeasible {
            r.x = None;
            r.objective = None;
        }
        return;
    }
    match &r.x {
        Some(x) if model.is_feasible(x, ACCEPT_TOL) => {
            r.objective = Some(model.objective.eval(x));
        }
        _ => {
            r.status = SolveStatus::Error;
            r.message = Some("returned point violates the model".into());
        }
    }
}

/// Local solve of an instance with its integer variables fixed. Returns
/// `Feasible` with the best feasible iterate, or `TimeLimitNoSolution` with
/// the least-violated iterate.
pub fn solve_local_nlp(inst: &MiqcqpInstance, fixed: &[(usize, f64)], start: &[f64], time_limit_s: f64) -> SolveResult {
    let t0 = Instant::now();
    let model = build_original(inst).with_fixed(fixed);
    let deadline = t0 + Duration::from_secs_f64(time_limit_s.max(0.0));
    let out = local_solve(&model, start, &NlpOptions::default(), deadline, None);
    let ok = model.is_feasible(&out.x, ACCEPT_TOL);
    SolveResult {
        status: if ok { SolveStatus::Feasible } else { SolveStatus::TimeLimitNoSolution },
        objective: Some(out.objective),
        x: Some(out.x),
        dual_bound: None,
        wall_time_s: t0.elapsed().as_secs_f64(),
        nodes: 0,
        timed_out: !ok && Instant::now() >= deadline,
        message: Some(format!("stationarity {:.3e}", out.stationarity)),
    }
}

#[cfg(test)]
mod tests;
