//! Exhaustive reference solver for tiny instances: every integer
//! assignment times a grid over the continuous box, with local polishing
//! of the most promising points.

use super::nlp::{local_solve, NlpOptions};
use super::{SolveResult, SolveStatus, ACCEPT_TOL};
use crate::convexify::build_original;
use crate::instance::{evaluate, MiqcqpInstance};
use std::time::{Duration, Instant};
use thiserror::Error;

/// Upper limit on enumerated points (assignments times grid points).
pub const BRUTE_MAX_ASSIGNMENTS: u64 = 20_000_000;
const MAX_INTEGERS: usize = 16;
const MAX_RANGE: usize = 8;
const MAX_CONTINUOUS: usize = 3;
const POLISH: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BruteForceError {
    #[error("{0} integer variables exceed the limit of 16")]
    TooManyIntegers(usize),
    #[error("integer variable {0} has more than 8 values")]
    RangeTooWide(usize),
    #[error("{0} continuous variables exceed the limit of 3")]
    TooManyContinuous(usize),
    #[error("{0} points to enumerate exceed the limit")]
    TooLarge(u64),
}

fn guard(inst: &MiqcqpInstance, grid: usize) -> Result<u64, BruteForceError> {
    let ints = inst.integer_indices();
    if ints.len() > MAX_INTEGERS {
        return Err(BruteForceError::TooManyIntegers(ints.len()));
    }
    let mut count: u64 = 1;
    for &j in &ints {
        let values = (inst.upper[j] - inst.lower[j]).round() as i64 + 1;
        if values > MAX_RANGE as i64 {
            return Err(BruteForceError::RangeTooWide(j));
        }
        count = count.saturating_mul(values.max(0) as u64);
    }
    let cont = inst.continuous_indices();
    if cont.len() > MAX_CONTINUOUS {
        return Err(BruteForceError::TooManyContinuous(cont.len()));
    }
    for _ in &cont {
        count = count.saturating_mul(grid.max(1) as u64);
    }
    if count > BRUTE_MAX_ASSIGNMENTS {
        return Err(BruteForceError::TooLarge(count));
    }
    Ok(count)
}

fn axis(lo: f64, hi: f64, grid: usize) -> Vec<f64> {
    if grid <= 1 || hi <= lo {
        return vec![0.5 * (lo + hi)];
    }
    (0..grid)
        .map(|k| lo + (hi - lo) * k as f64 / (grid - 1) as f64)
        .collect()
}

/// Enumerates a mixed-radix counter over `sizes`.
fn next(counter: &mut [usize], sizes: &[usize]) -> bool {
    for (c, &s) in counter.iter_mut().zip(sizes) {
        *c += 1;
        if *c < s {
            return true;
        }
        *c = 0;
    }
    false
}

struct Candidate {
    x: Vec<f64>,
    objective: f64,
    violation: f64,
}

/// Best point over all integer assignments and a `grid`-per-axis lattice of
/// the continuous box. Exact (`Optimal`) for pure-integer instances; the
/// `nodes` field of the result is the number of enumerated points.
pub fn brute_force(inst: &MiqcqpInstance, grid: usize) -> SolveResult {
    let start = Instant::now();
    let total = match guard(inst, grid) {
        Ok(t) => t,
        Err(e) => return SolveResult::error(e.to_string(), start),
    };
    let ints = inst.integer_indices();
    let cont = inst.continuous_indices();
    let int_values: Vec<Vec<f64>> = ints
        .iter()
        .map(|&j| {
            let lo = inst.lower[j].ceil() as i64;
            let hi = inst.upper[j].floor() as i64;
            (lo..=hi).map(|v| v as f64).collect()
        })
        .collect();
    if int_values.iter().any(|v| v.is_empty()) {
        return no_solution(start, 0);
    }
    let axes: Vec<Vec<f64>> = cont.iter().map(|&j| axis(inst.lower[j], inst.upper[j], grid)).collect();
    let int_sizes: Vec<usize> = int_values.iter().map(|v| v.len()).collect();
    let grid_sizes: Vec<usize> = axes.iter().map(|a| a.len()).collect();

    // best feasible and least violated point per assignment
    let mut feasible: Vec<Candidate> = Vec::new();
    let mut infeasible: Vec<Candidate> = Vec::new();
    let mut enumerated = 0u64;
    let mut ic = vec![0usize; ints.len()];
    let mut x = vec![0.0; inst.n];
    loop {
        for (k, &j) in ints.iter().enumerate() {
            x[j] = int_values[k][ic[k]];
        }
        let mut best_feas: Option<Candidate> = None;
        let mut best_viol: Option<Candidate> = None;
        let mut gc = vec![0usize; cont.len()];
        loop {
            for (k, &j) in cont.iter().enumerate() {
                x[j] = axes[k][gc[k]];
            }
            enumerated += 1;
            let ev = evaluate(inst, &x);
            if ev.max_violation <= ACCEPT_TOL {
                if best_feas.as_ref().is_none_or(|b| ev.objective < b.objective) {
                    best_feas = Some(Candidate { x: x.clone(), objective: ev.objective, violation: ev.max_violation });
                }
            } else if best_viol.as_ref().is_none_or(|b| ev.max_violation < b.violation) {
                best_viol = Some(Candidate { x: x.clone(), objective: ev.objective, violation: ev.max_violation });
            }
            if !next(&mut gc, &grid_sizes) {
                break;
            }
        }
        match best_feas {
            Some(c) => feasible.push(c),
            None => infeasible.extend(best_viol),
        }
        if !next(&mut ic, &int_sizes) {
            break;
        }
    }
    debug_assert_eq!(enumerated, total);

    feasible.sort_by(|a, b| a.objective.total_cmp(&b.objective));
    infeasible.sort_by(|a, b| a.violation.total_cmp(&b.violation));
    let mut best: Option<Candidate> = None;
    let consider = |c: Candidate, best: &mut Option<Candidate>| {
        if best.as_ref().is_none_or(|b| c.objective < b.objective) {
            *best = Some(c);
        }
    };
    if cont.is_empty() {
        if let Some(c) = feasible.into_iter().next() {
            consider(c, &mut best);
        }
    } else {
        let model = build_original(inst);
        let deadline = Instant::now() + Duration::from_secs(30);
        let polish: Vec<Candidate> = feasible
            .into_iter()
            .take(POLISH)
            .chain(infeasible.into_iter().take(POLISH))
            .collect();
        for c in polish {
            let fixes: Vec<(usize, f64)> = ints.iter().map(|&j| (j, c.x[j])).collect();
            let m = model.with_fixed(&fixes);
            let out = local_solve(&m, &c.x, &NlpOptions::default(), deadline, None);
            let ev = evaluate(inst, &out.x);
            if ev.max_violation <= ACCEPT_TOL {
                consider(Candidate { x: out.x, objective: ev.objective, violation: ev.max_violation }, &mut best);
            }
            if c.violation <= ACCEPT_TOL {
                consider(c, &mut best);
            }
        }
    }
    match best {
        Some(c) => SolveResult {
            status: if cont.is_empty() { SolveStatus::Optimal } else { SolveStatus::Feasible },
            objective: Some(c.objective),
            x: Some(c.x),
            dual_bound: None,
            wall_time_s: start.elapsed().as_secs_f64(),
            nodes: enumerated,
            timed_out: false,
            message: None,
        },
        None => no_solution(start, enumerated),
    }
}

fn no_solution(start: Instant, enumerated: u64) -> SolveResult {
    SolveResult {
        status: SolveStatus::Infeasible,
        x: None,
        objective: None,
        dual_bound: None,
        wall_time_s: start.elapsed().as_secs_f64(),
        nodes: enumerated,
        timed_out: false,
        message: None,
    }
}
