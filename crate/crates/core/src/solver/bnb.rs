//! Branch-and-bound over integer variables with conic node relaxations.
//!
//! Convex models get exact relaxations; nonconvex models get the
//! diagonal-shift underestimator of [`ConicTemplate`], and leaves with all
//! integers fixed are handed to a multi-start local solve.

use super::conic::{ConicTemplate, RelaxOutcome};
use super::nlp::{local_solve, NlpOptions};
use super::{Goal, SolveRequest, SolveResult, SolveStatus};
use crate::convexify::ModelIR;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

/// Feasibility tolerance for accepted points.
pub const ACCEPT_TOL: f64 = 1e-6;
/// Relaxation values closer than this to an integer count as integral.
const BRANCH_TOL: f64 = 1e-6;

struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    bound: f64,
    seq: u64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap: smallest bound first, then oldest
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

enum Frontier {
    Best(BinaryHeap<Node>),
    Depth(Vec<Node>),
}

impl Frontier {
    fn pop(&mut self) -> Option<Node> {
        match self {
            Frontier::Best(h) => h.pop(),
            Frontier::Depth(s) => s.pop(),
        }
    }
    fn push(&mut self, n: Node) {
        match self {
            Frontier::Best(h) => h.push(n),
            Frontier::Depth(s) => s.push(n),
        }
    }
    fn is_empty(&self) -> bool {
        match self {
            Frontier::Best(h) => h.is_empty(),
            Frontier::Depth(s) => s.is_empty(),
        }
    }
}

struct Search<'a> {
    req: &'a SolveRequest,
    model: &'a ModelIR,
    ints: Vec<usize>,
    deadline: Instant,
    incumbent: Option<(Vec<f64>, f64)>,
    rng: ChaCha8Rng,
}

impl Search<'_> {
    fn remaining(&self) -> f64 {
        self.deadline.saturating_duration_since(Instant::now()).as_secs_f64()
    }

    fn stopped(&self) -> bool {
        self.remaining() <= 0.0 || self.req.cancel.as_ref().is_some_and(|c| c.is_cancelled())
    }

    fn cutoff(&self) -> f64 {
        let inc = self.incumbent.as_ref().map_or(f64::INFINITY, |i| i.1);
        let c = inc.min(self.req.cutoff.unwrap_or(f64::INFINITY));
        c - 1e-7 * (1.0 + c.abs().min(1e12))
    }

    fn round_ints(&self, x: &mut [f64]) {
        for &j in &self.ints {
            x[j] = x[j].round();
        }
    }

    /// Offers a point; returns true when it became the incumbent.
    fn offer(&mut self, mut x: Vec<f64>) -> bool {
        if x.len() != self.model.n_vars() {
            return false;
        }
        self.round_ints(&mut x);
        let mut ev = self.model.evaluate(&x);
        if ev.max_violation > ACCEPT_TOL && ev.max_violation < 1e-2 && self.remaining() > 0.0 {
            // numerical polish with integers fixed
            let fixes: Vec<(usize, f64)> = self.ints.iter().map(|&j| (j, x[j])).collect();
            if self.model.bound_violation(&x) <= ACCEPT_TOL {
                let m = self.model.with_fixed(&fixes);
                let out = local_solve(&m, &x, &NlpOptions::default(), self.deadline, self.req.cancel.as_ref());
                x = out.x;
                self.round_ints(&mut x);
                ev = self.model.evaluate(&x);
            }
        }
        if ev.max_violation > ACCEPT_TOL || !ev.objective.is_finite() {
            return false;
        }
        if self.improves(ev.objective) {
            self.incumbent = Some((x, ev.objective));
            return true;
        }
        false
    }

    fn improves(&self, obj: f64) -> bool {
        let limit = self.req.cutoff.unwrap_or(f64::INFINITY);
        obj < limit && self.incumbent.as_ref().is_none_or(|i| obj < i.1)
    }

    /// Multi-start local solve with every integer fixed to the node value.
    fn local_leaf(&mut self, lo: &[f64], hi: &[f64], relax_x: Option<&[f64]>) {
        let m = fixed_copy(self.model, lo, hi);
        let n = m.n_vars();
        let mut starts = Vec::new();
        if let Some(x) = relax_x {
            starts.push(x.to_vec());
        }
        let center: Vec<f64> = (0..n).map(|j| mid_of(lo[j], hi[j])).collect();
        starts.push(center);
        let random: Vec<f64> = (0..n)
            .map(|j| {
                let (a, b) = finite_box(lo[j], hi[j]);
                if b > a {
                    self.rng.random_range(a..=b)
                } else {
                    a
                }
            })
            .collect();
        starts.push(random);
        for s in starts {
            if self.stopped() {
                break;
            }
            let out = local_solve(&m, &s, &NlpOptions::default(), self.deadline, self.req.cancel.as_ref());
            self.offer(out.x);
        }
    }
}

fn finite_box(lo: f64, hi: f64) -> (f64, f64) {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (lo, hi),
        (true, false) => (lo, lo + 1.0),
        (false, true) => (hi - 1.0, hi),
        (false, false) => (0.0, 0.0),
    }
}

fn mid_of(lo: f64, hi: f64) -> f64 {
    let (a, b) = finite_box(lo, hi);
    0.5 * (a + b)
}

fn fixed_copy(model: &ModelIR, lo: &[f64], hi: &[f64]) -> ModelIR {
    let mut m = model.clone();
    for (j, v) in m.variables.iter_mut().enumerate() {
        v.lower = lo[j];
        v.upper = hi[j];
    }
    m
}

/// Most fractional integer (ties to the lowest index).
fn most_fractional(ints: &[usize], x: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in ints {
        let f = (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
        if f > BRANCH_TOL && best.is_none_or(|(_, b)| f > b) {
            best = Some((j, f));
        }
    }
    best.map(|b| b.0)
}

/// Widest integer whose node range is not a single value.
fn widest_unfixed(ints: &[usize], lo: &[f64], hi: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in ints {
        let w = hi[j] - lo[j];
        if w >= 0.5 && best.is_none_or(|(_, b)| w > b) {
            best = Some((j, w));
        }
    }
    best.map(|b| b.0)
}

pub(crate) fn branch_and_bound(req: &SolveRequest, start: Instant) -> SolveResult {
    let model = &req.model;
    let deadline = start + std::time::Duration::from_secs_f64(req.time_limit_s.max(0.0));
    let template = match ConicTemplate::convex(model) {
        Ok(t) => t,
        Err(_) => match ConicTemplate::underestimating(model) {
            Ok(t) => t,
            Err(e) => return SolveResult::error(e.to_string(), start),
        },
    };
    let exact = template.is_exact();
    let ints = model.integer_vars();
    let has_continuous = ints.len() < model.n_vars();
    let mut s = Search {
        req,
        model,
        ints: ints.clone(),
        deadline,
        incumbent: None,
        rng: ChaCha8Rng::seed_from_u64(req.seed),
    };
    if let Some(w) = &req.warm_start {
        s.offer(w.clone());
    }
    if req.goal == Goal::FirstFeasible && s.incumbent.is_some() {
        return finish(s, SolveStatus::Feasible, None, 0, false, start);
    }

    let mut lo = model.lower();
    let mut hi = model.upper();
    for &j in &ints {
        lo[j] = lo[j].ceil();
        hi[j] = hi[j].floor();
    }
    let mut frontier = if req.goal == Goal::FirstFeasible {
        Frontier::Depth(Vec::new())
    } else {
        Frontier::Best(BinaryHeap::new())
    };
    frontier.push(Node { lo, hi, bound: f64::NEG_INFINITY, seq: 0 });
    let mut seq = 1u64;
    let mut nodes = 0u64;
    let mut incomplete = false;
    let mut root_bound: Option<f64> = None;
    let mut stopped = false;

    while let Some(node) = frontier.pop() {
        if node.bound >= s.cutoff() {
            continue;
        }
        if s.stopped() {
            stopped = true;
            frontier.push(node);
            break;
        }
        nodes += 1;
        let outcome = template.solve(&node.lo, &node.hi, s.remaining());
        let (x, bound) = match outcome {
            RelaxOutcome::Infeasible => {
                if nodes == 1 {
                    root_bound = Some(f64::INFINITY);
                }
                continue;
            }
            RelaxOutcome::TimeLimit => {
                stopped = true;
                frontier.push(node);
                break;
            }
            RelaxOutcome::Failed(msg) => {
                log::debug!("relaxation failed at node {nodes}: {msg}");
                incomplete = true;
                match widest_unfixed(&ints, &node.lo, &node.hi) {
                    Some(j) => {
                        for child in split_mid(&node, j, &mut seq) {
                            frontier.push(child);
                        }
                    }
                    None => {
                        let lo = node.lo.clone();
                        let hi = node.hi.clone();
                        s.local_leaf(&lo, &hi, None);
                    }
                }
                if req.goal == Goal::FirstFeasible && s.incumbent.is_some() {
                    break;
                }
                continue;
            }
            RelaxOutcome::Solved { x, bound, .. } => (x, bound.max(node.bound)),
        };
        if nodes == 1 {
            root_bound = Some(bound);
        }
        if bound >= s.cutoff() {
            continue;
        }
        match most_fractional(&ints, &x) {
            Some(j) => {
                let v = x[j];
                let mut down = Node { lo: node.lo.clone(), hi: node.hi.clone(), bound, seq };
                down.hi[j] = v.floor();
                let mut up = Node { lo: node.lo, hi: node.hi, bound, seq: seq + 1 };
                up.lo[j] = v.ceil();
                seq += 2;
                // depth-first explores the nearer side first
                if v - v.floor() < 0.5 {
                    frontier.push(up);
                    frontier.push(down);
                } else {
                    frontier.push(down);
                    frontier.push(up);
                }
            }
            None => {
                let mut xi = x.clone();
                s.round_ints(&mut xi);
                let all_fixed = widest_unfixed(&ints, &node.lo, &node.hi).is_none();
                if exact {
                    // the relaxation optimum is integral, so the node is solved
                    if has_continuous {
                        let mut flo = node.lo.clone();
                        let mut fhi = node.hi.clone();
                        for &j in &ints {
                            flo[j] = xi[j];
                            fhi[j] = xi[j];
                        }
                        match template.solve(&flo, &fhi, s.remaining()) {
                            RelaxOutcome::Solved { x: xc, .. } => {
                                if !s.offer(xc) {
                                    s.offer(xi);
                                }
                            }
                            _ => {
                                s.offer(xi);
                            }
                        }
                    } else {
                        s.offer(xi);
                    }
                } else if all_fixed {
                    s.local_leaf(&node.lo, &node.hi, Some(&x));
                } else {
                    let fixes: Vec<(usize, f64)> = ints.iter().map(|&j| (j, xi[j])).collect();
                    let m = model.with_fixed(&fixes);
                    let out = local_solve(&m, &xi, &NlpOptions::default(), s.deadline, req.cancel.as_ref());
                    s.offer(out.x);
                    let j = widest_unfixed(&ints, &node.lo, &node.hi).expect("some integer is unfixed");
                    for child in split_mid(&Node { bound, ..node }, j, &mut seq) {
                        frontier.push(child);
                    }
                }
            }
        }
        if req.goal == Goal::FirstFeasible && s.incumbent.is_some() {
            break;
        }
    }

    let complete = frontier.is_empty() && !incomplete && !stopped;
    let proven = complete && (exact || !has_continuous);
    let status = match (&s.incumbent, proven) {
        (Some(_), true) if req.goal != Goal::FirstFeasible => SolveStatus::Optimal,
        (Some(_), _) => SolveStatus::Feasible,
        (None, true) => SolveStatus::Infeasible,
        (None, false) => SolveStatus::TimeLimitNoSolution,
    };
    let dual = if proven {
        s.incumbent.as_ref().map(|i| i.1)
    } else {
        root_bound
    };
    finish(s, status, dual, nodes, stopped, start)
}

fn split_mid(node: &Node, j: usize, seq: &mut u64) -> [Node; 2] {
    let mid = ((node.lo[j] + node.hi[j]) / 2.0).floor();
    let mut left = Node { lo: node.lo.clone(), hi: node.hi.clone(), bound: node.bound, seq: *seq };
    left.hi[j] = mid;
    let mut right = Node { lo: node.lo.clone(), hi: node.hi.clone(), bound: node.bound, seq: *seq + 1 };
    right.lo[j] = mid + 1.0;
    *seq += 2;
    [right, left]
}

fn finish(s: Search<'_>, status: SolveStatus, dual: Option<f64>, nodes: u64, timed_out: bool, start: Instant) -> SolveResult {
    let (x, objective) = match s.incumbent {
        Some((x, f)) => (Some(x), Some(f)),
        None => (None, None),
    };
    SolveResult {
        status,
        x,
        objective,
        dual_bound: dual,
        wall_time_s: start.elapsed().as_secs_f64(),
        nodes,
        timed_out,
        message: None,
    }
}

/// True when the model's continuous relaxation is convex.
pub fn is_convex_model(model: &ModelIR) -> bool {
    ConicTemplate::convex(model).is_ok()
}
