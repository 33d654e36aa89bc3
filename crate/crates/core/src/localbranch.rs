//! Parallel local branching: refines a feasible point by searching Hamming
//! neighbourhoods of the incumbent split into distance windows, excluding
//! explored neighbourhoods with right-branch constraints and escaping to
//! the farthest neighbourhood when no improvement remains nearby.

use crate::convexify::{add_lbc, add_rlbc, build_branching_model, delta, ConvexifyError, ModelIR};
use crate::heuristics::RunContext;
use crate::instance::{check_feasible, evaluate, MiqcqpInstance};
use crate::metrics::IncumbentTrace;
use crate::solver::{Goal, SolveRequest, SolveResult, SolveStatus, SolverBackend, ACCEPT_TOL};
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use thiserror::Error;

/// Relative objective decrease required to replace the incumbent.
pub const IMPROVE_TOL: f64 = 1e-6;
/// Bounds on the per-subproblem time limit derived from the budget.
pub const SUBPROBLEM_MIN_S: f64 = 5.0;
pub const SUBPROBLEM_MAX_S: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalBranchError {
    #[error("no binary variables to branch on")]
    NoBinaries,
    #[error("partition ranges must be nonempty, contiguous and start at 1: {0:?}")]
    BadScheme(Vec<(usize, usize)>),
    #[error("starting point is not feasible")]
    InfeasibleStart,
    #[error(transparent)]
    Convexify(#[from] ConvexifyError),
}

/// Distance windows `[k_lo, k_hi]` splitting the neighbourhood `1..=k_total`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionScheme {
    pub ranges: Vec<(usize, usize)>,
}

impl Default for PartitionScheme {
    fn default() -> Self {
        Self { ranges: vec![(1, 7), (8, 13), (14, 17), (18, 19)] }
    }
}

impl PartitionScheme {
    pub fn new(ranges: Vec<(usize, usize)>) -> Result<Self, LocalBranchError> {
        let mut next = 1;
        for &(lo, hi) in &ranges {
            if lo != next || hi < lo {
                return Err(LocalBranchError::BadScheme(ranges));
            }
            next = hi + 1;
        }
        if ranges.is_empty() {
            return Err(LocalBranchError::BadScheme(ranges));
        }
        Ok(Self { ranges })
    }

    /// Neighbourhood radius: the last window's upper end.
    pub fn k_total(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.1)
    }

    /// Drops windows starting beyond `b` and clips the rest to `b`.
    pub fn truncated(&self, b: usize) -> Self {
        Self {
            ranges: self
                .ranges
                .iter()
                .filter(|r| r.0 <= b)
                .map(|&(lo, hi)| (lo, hi.min(b)))
                .collect(),
        }
    }

    /// Splits every window of width above one into two halves.
    pub fn halved(&self) -> Self {
        Self { ranges: self.ranges.iter().flat_map(|&r| halve(r)).collect() }
    }
}

fn halve((lo, hi): (usize, usize)) -> Vec<(usize, usize)> {
    if hi == lo {
        vec![(lo, hi)]
    } else {
        let mid = lo + (hi - lo) / 2;
        vec![(lo, mid), (mid + 1, hi)]
    }
}

/// One model per window, each with both local-branching sides appended.
/// `x_ref` holds the incumbent's values on `b_vars`.
pub fn partition_neighborhood(
    base: &ModelIR,
    b_vars: &[usize],
    x_ref: &[f64],
    scheme: &PartitionScheme,
) -> Result<Vec<((usize, usize), ModelIR)>, LocalBranchError> {
    if b_vars.is_empty() {
        return Err(LocalBranchError::NoBinaries);
    }
    scheme
        .truncated(b_vars.len())
        .ranges
        .into_iter()
        .map(|r| Ok((r, add_lbc(base, b_vars, x_ref, r.0, r.1)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchMode {
    Lbc,
    Rlbc,
}

/// A node of the local-branching tree.
#[derive(Debug, Clone)]
pub struct BranchNode {
    /// Branching model plus the accumulated right-branch constraints.
    pub base_model: ModelIR,
    /// Incumbent in original coordinates; always original-feasible.
    pub incumbent: Vec<f64>,
    pub objective: f64,
    pub depth: usize,
    pub mode: BranchMode,
}

/// Solves one window subproblem and keeps the result only when its point is
/// original-feasible and strictly better than the node incumbent.
pub fn solve_subproblem(
    inst: &MiqcqpInstance,
    backend: &dyn SolverBackend,
    node: &BranchNode,
    model: ModelIR,
    k_lo: usize,
    time_limit_s: f64,
    ctx: &RunContext,
) -> SolveResult {
    let mut req = SolveRequest::new(model, time_limit_s)
        .goal(Goal::BestWithinLimit)
        .cutoff(cutoff(node.objective));
    req.cancel = ctx.cancel.clone();
    if k_lo == 0 {
        req.warm_start = Some(node.base_model.complete(&node.incumbent));
    }
    let mut r = backend.solve(&req);
    reject_unless_improving(inst, node.objective, &mut r);
    r
}

fn cutoff(f: f64) -> f64 {
    f - IMPROVE_TOL * f.abs().max(1.0)
}

fn reject_unless_improving(inst: &MiqcqpInstance, incumbent: f64, r: &mut SolveResult) {
    let Some(x) = r.x.as_ref().filter(|_| r.status.has_solution()) else {
        return;
    };
    let orig = &x[..inst.n];
    let ok = check_feasible(inst, orig, ACCEPT_TOL) && evaluate(inst, orig).objective < cutoff(incumbent);
    if !ok {
        log::warn!("subproblem point rejected by validation");
        r.status = SolveStatus::Error;
        r.message = Some("point rejected by validation on the original instance".into());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbOptions {
    /// Upper bound on concurrent subproblems; capped at the core count.
    pub workers: usize,
    pub scheme: PartitionScheme,
    /// Fixed per-subproblem limit; `None` derives it from the remaining
    /// budget (a sixth, clamped to `[5, 30]` seconds).
    pub subproblem_limit_s: Option<f64>,
}

impl Default for LbOptions {
    fn default() -> Self {
        Self { workers: 4, scheme: PartitionScheme::default(), subproblem_limit_s: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LbStop {
    /// The budget ran out or the run was cancelled.
    Budget,
    /// The farthest-neighbourhood escape found nothing better.
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbOutcome {
    /// Every improving incumbent, starting with the initial point.
    pub trace: IncumbentTrace,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Tree depth reached (number of improving descents).
    pub depth: usize,
    pub subproblems: usize,
    pub resplits: usize,
    pub rlbc_rounds: usize,
    pub stopped_by: LbStop,
}

/// Solves `jobs` with up to `workers` threads (at most one per core);
/// results keep the job order.
fn solve_batch(
    inst: &MiqcqpInstance,
    backend: &dyn SolverBackend,
    node: &BranchNode,
    jobs: Vec<((usize, usize), ModelIR)>,
    limit: f64,
    workers: usize,
    ctx: &RunContext,
) -> Vec<((usize, usize), SolveResult)> {
    let slots: Vec<Mutex<Option<((usize, usize), ModelIR)>>> = jobs.into_iter().map(|j| Mutex::new(Some(j))).collect();
    let results: Vec<Mutex<Option<((usize, usize), SolveResult)>>> = slots.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let threads = batch_threads(workers, slots.len());
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= slots.len() {
            break;
        }
        let (range, model) = slots[i].lock().expect("job lock").take().expect("job taken once");
        let r = solve_subproblem(inst, backend, node, model, range.0, limit, ctx);
        *results[i].lock().expect("result lock") = Some((range, r));
    };
    if threads <= 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(work);
            }
        });
    }
    results
        .into_iter()
        .map(|m| m.into_inner().expect("result lock").expect("every job solved"))
        .collect()
}

/// Threads for a batch: at most one per available core, since extra
/// threads would only time-slice and make wall-clock limits bind earlier.
fn batch_threads(workers: usize, jobs: usize) -> usize {
    let cores = std::thread::available_parallelism().map_or(1, |c| c.get());
    workers.max(1).min(cores).min(jobs)
}

/// Best improving result; ties go to the earliest window.
fn best_of(results: &[((usize, usize), SolveResult)]) -> Option<(Vec<f64>, f64)> {
    results
        .iter()
        .filter(|(_, r)| r.has_solution())
        .map(|(_, r)| (r.x.clone().expect("solution"), r.objective.expect("objective")))
        .fold(None, |acc: Option<(Vec<f64>, f64)>, (x, f)| match acc {
            Some((_, g)) if g <= f => acc,
            _ => Some((x, f)),
        })
}

fn subproblem_limit(opts: &LbOptions, ctx: &RunContext) -> f64 {
    let rem = ctx.remaining();
    opts.subproblem_limit_s
        .unwrap_or_else(|| (rem / 6.0).clamp(SUBPROBLEM_MIN_S, SUBPROBLEM_MAX_S))
        .min(rem)
}

/// Refines the feasible point `x0` until the budget of `ctx` is spent or the
/// farthest-neighbourhood escape fails.
///
/// Each tree node solves its window subproblems concurrently. An
/// improvement adds the right-branch constraint `Δ(x, x̄) ≥ k_total + 1`
/// around the old centre and descends; when no window improves, windows
/// that hit their time limit are split in half and retried once, and then
/// the reverse constraint `Δ_r(x, x̄) ≤ k_total` searches the farthest
/// neighbourhood. A successful escape restarts the descent from its point.
pub fn run_parallel_lb(
    inst: &MiqcqpInstance,
    x0: &[f64],
    ctx: &RunContext,
    opts: &LbOptions,
) -> Result<LbOutcome, LocalBranchError> {
    if !check_feasible(inst, x0, ACCEPT_TOL) {
        return Err(LocalBranchError::InfeasibleStart);
    }
    let (model, b_vars) = build_branching_model(inst);
    if b_vars.is_empty() {
        return Err(LocalBranchError::NoBinaries);
    }
    let backend = ctx.backend.as_ref();
    let k_total = opts.scheme.k_total();
    let f0 = evaluate(inst, x0).objective;
    let mut trace = IncumbentTrace::new(ctx.horizon());
    trace.record(ctx.elapsed(), f0);
    let mut node = BranchNode { base_model: model, incumbent: x0.to_vec(), objective: f0, depth: 0, mode: BranchMode::Lbc };
    // centres whose neighbourhoods have been excluded
    let mut excluded: Vec<Vec<f64>> = Vec::new();
    let mut out = LbOutcome {
        trace: IncumbentTrace::new(ctx.horizon()),
        x: x0.to_vec(),
        objective: f0,
        depth: 0,
        subproblems: 0,
        resplits: 0,
        rlbc_rounds: 0,
        stopped_by: LbStop::Budget,
    };
    let bits = |node: &BranchNode| -> Vec<f64> {
        let full = node.base_model.complete(&node.incumbent);
        b_vars.iter().map(|&j| full[j].round()).collect()
    };
    let respects_exclusions = |x: &[f64], excluded: &[Vec<f64>]| {
        excluded.iter().all(|c| delta(&b_vars, c, x) >= (k_total + 1) as f64 - 1e-6)
    };
    while !ctx.expired() {
        let centre = bits(&node);
        let limit = subproblem_limit(opts, ctx);
        let found = match node.mode {
            BranchMode::Lbc => {
                let jobs = partition_neighborhood(&node.base_model, &b_vars, &centre, &opts.scheme)?;
                out.subproblems += jobs.len();
                let mut results = solve_batch(inst, backend, &node, jobs, limit, opts.workers, ctx);
                if best_of(&results).is_none() {
                    let retry: Vec<(usize, usize)> = results
                        .iter()
                        .filter(|(r, res)| res.timed_out && r.1 > r.0)
                        .flat_map(|(r, _)| halve(*r))
                        .collect();
                    if !retry.is_empty() && !ctx.expired() {
                        out.resplits += 1;
                        let jobs = retry
                            .into_iter()
                            .map(|r| Ok((r, add_lbc(&node.base_model, &b_vars, &centre, r.0, r.1)?)))
                            .collect::<Result<Vec<_>, LocalBranchError>>()?;
                        out.subproblems += jobs.len();
                        let limit = subproblem_limit(opts, ctx);
                        results = solve_batch(inst, backend, &node, jobs, limit, opts.workers, ctx);
                    }
                }
                best_of(&results)
            }
            BranchMode::Rlbc => {
                out.rlbc_rounds += 1;
                out.subproblems += 1;
                let model = add_rlbc(&node.base_model, &b_vars, &centre, k_total)?;
                let r = solve_subproblem(inst, backend, &node, model, 1, limit, ctx);
                best_of(&[((0, 0), r)])
            }
        };
        let found = found.filter(|(x, _)| {
            let ok = respects_exclusions(x, &excluded);
            if !ok {
                log::error!("subproblem returned a point inside an excluded neighbourhood");
            }
            ok
        });
        match (found, node.mode) {
            (Some((x, f)), mode) => {
                let x_orig = x[..inst.n].to_vec();
                trace.record(ctx.elapsed(), f);
                let base_model = if mode == BranchMode::Lbc {
                    excluded.push(centre.clone());
                    add_lbc(&node.base_model, &b_vars, &centre, k_total + 1, b_vars.len())?
                } else {
                    node.base_model.clone()
                };
                node = BranchNode { base_model, incumbent: x_orig, objective: f, depth: node.depth + 1, mode: BranchMode::Lbc };
            }
            (None, BranchMode::Lbc) => {
                if ctx.expired() {
                    break;
                }
                node.mode = BranchMode::Rlbc;
            }
            (None, BranchMode::Rlbc) => {
                if !ctx.expired() {
                    out.stopped_by = LbStop::Exhausted;
                }
                break;
            }
        }
    }
    out.trace = trace;
    out.depth = node.depth;
    out.x = node.incumbent;
    out.objective = node.objective;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convexify::{build_original, delta_r};
    use crate::instance::{LinearRow, SymSparseMatrix};
    use proptest::prelude::*;

    fn binary_vectors(b: usize) -> impl Iterator<Item = Vec<f64>> {
        (0u32..(1 << b)).map(move |m| (0..b).map(|j| ((m >> j) & 1) as f64).collect())
    }

    fn pure_binary(n: usize) -> MiqcqpInstance {
        let mut inst = MiqcqpInstance::new("lb", n);
        inst.integer = vec![true; n];
        inst
    }

    #[test]
    fn default_scheme_on_thirty_binaries() {
        let inst = pure_binary(30);
        let m = build_original(&inst);
        let b: Vec<usize> = (0..30).collect();
        let parts = partition_neighborhood(&m, &b, &vec![0.0; 30], &PartitionScheme::default()).unwrap();
        let ranges: Vec<_> = parts.iter().map(|p| p.0).collect();
        assert_eq!(ranges, vec![(1, 7), (8, 13), (14, 17), (18, 19)]);
    }

    #[test]
    fn small_neighbourhood_is_truncated() {
        assert_eq!(PartitionScheme::default().truncated(5).ranges, vec![(1, 5)]);
        assert_eq!(PartitionScheme::default().truncated(15).ranges, vec![(1, 7), (8, 13), (14, 15)]);
        assert_eq!(
            PartitionScheme::default().halved().ranges,
            vec![(1, 4), (5, 7), (8, 10), (11, 13), (14, 15), (16, 17), (18, 18), (19, 19)]
        );
        assert!(PartitionScheme::new(vec![(2, 3)]).is_err());
        assert!(PartitionScheme::new(vec![(1, 3), (5, 6)]).is_err());
    }

    #[test]
    fn windows_and_right_branch_cover_every_other_vector() {
        for b in 1..=8usize {
            let inst = pure_binary(b);
            let m = build_original(&inst);
            let bv: Vec<usize> = (0..b).collect();
            let scheme = PartitionScheme::new(vec![(1, 2), (3, 4)]).unwrap();
            let centre: Vec<f64> = (0..b).map(|j| (j % 2) as f64).collect();
            let parts = partition_neighborhood(&m, &bv, &centre, &scheme).unwrap();
            let right = add_lbc(&m, &bv, &centre, scheme.k_total() + 1, b).unwrap();
            for x in binary_vectors(b) {
                let hits = parts.iter().filter(|(_, p)| p.is_feasible(&x, 1e-9)).count()
                    + usize::from(right.is_feasible(&x, 1e-9));
                let expected = usize::from(x != centre);
                assert_eq!(hits, expected, "b {b}, x {x:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn lbc_and_rlbc_distances_are_complementary(bits in proptest::collection::vec(0u8..2, 1..20), mask in any::<u32>()) {
            let b = bits.len();
            let bv: Vec<usize> = (0..b).collect();
            let centre: Vec<f64> = bits.iter().map(|&v| v as f64).collect();
            let x: Vec<f64> = (0..b).map(|j| ((mask >> j) & 1) as f64).collect();
            prop_assert_eq!(delta(&bv, &centre, &x) + delta_r(&bv, &centre, &x), b as f64);
        }
    }

    /// min sum c_j x_j with one cardinality row; optimum known in closed form.
    fn cardinality_instance(n: usize) -> MiqcqpInstance {
        let mut inst = pure_binary(n);
        inst.objective.a = (0..n).map(|j| -1.0 - j as f64 * 0.1).collect();
        inst.objective.q = SymSparseMatrix::from_triplets(n, [(0, 1, 0.3)]);
        inst.linear.push(LinearRow { coeffs: (0..n).map(|j| (j, 1.0)).collect(), rhs: 3.0 });
        inst
    }

    fn opts(workers: usize) -> LbOptions {
        LbOptions { workers, subproblem_limit_s: Some(10.0), ..Default::default() }
    }

    #[test]
    fn optimal_start_is_never_improved() {
        let inst = cardinality_instance(6);
        let x0 = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let out = run_parallel_lb(&inst, &x0, &RunContext::new(60.0), &opts(2)).unwrap();
        assert_eq!(out.trace.events.len(), 1);
        assert_eq!(out.x, x0);
        assert_eq!(out.stopped_by, LbStop::Exhausted);
    }

    #[test]
    fn improvement_at_distance_three() {
        let inst = cardinality_instance(6);
        let x0 = vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let out = run_parallel_lb(&inst, &x0, &RunContext::new(60.0), &opts(4)).unwrap();
        assert_eq!(out.x, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert!(out.trace.events.len() >= 2);
        for w in out.trace.events.windows(2) {
            assert!(w[1].1 < w[0].1);
        }
    }

    #[test]
    fn worker_count_does_not_change_the_result() {
        let inst = cardinality_instance(8);
        let x0 = vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let one = run_parallel_lb(&inst, &x0, &RunContext::new(60.0), &opts(1)).unwrap();
        let four = run_parallel_lb(&inst, &x0, &RunContext::new(60.0), &opts(4)).unwrap();
        assert!((one.objective - four.objective).abs() <= 1e-6);
    }

    #[test]
    fn infeasible_start_and_no_binaries_are_errors() {
        let inst = cardinality_instance(4);
        assert_eq!(
            run_parallel_lb(&inst, &[1.0; 4], &RunContext::new(5.0), &opts(1)).unwrap_err(),
            LocalBranchError::InfeasibleStart
        );
        let cont = MiqcqpInstance::new("c", 2);
        assert_eq!(
            run_parallel_lb(&cont, &[0.0; 2], &RunContext::new(5.0), &opts(1)).unwrap_err(),
            LocalBranchError::NoBinaries
        );
    }
}
