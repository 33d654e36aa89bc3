//! Adapter running an external solver executable.
//!
//! The executable is invoked as `<exe> <model.json> <solution.txt>
//! <time-limit>`. It reads the [`ModelIR`] JSON and writes a solution file:
//!
//! ```text
//! feasible
//! 12.5
//! x0 1
//! x1 0.25
//! ```
//!
//! Line one is the status (`optimal`, `feasible`, `infeasible`,
//! `time_limit_no_solution` or `error`), line two the objective (or
//! `none`), then one `name value` pair per line. Missing auxiliary
//! variables are completed from the original ones. Returned points are
//! re-validated before acceptance.

use super::{Capabilities, SolveRequest, SolveResult, SolveStatus, SolverBackend, ACCEPT_TOL};
use crate::convexify::ModelIR;
use std::collections::HashMap;
use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

/// Environment variable naming the adapter executable.
pub const EXTERNAL_SOLVER_ENV: &str = "MIQCQP_EXTERNAL_SOLVER";

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSolution {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub values: Vec<(String, f64)>,
}

/// Parses the solution-file text.
pub fn parse_solution_file(text: &str) -> Result<ParsedSolution, String> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let status: SolveStatus = lines.next().ok_or("empty solution file")?.parse()?;
    let objective = match lines.next() {
        None => None,
        Some(l) if l.eq_ignore_ascii_case("none") || l.eq_ignore_ascii_case("nan") => None,
        Some(l) => Some(l.parse::<f64>().map_err(|_| format!("bad objective line '{l}'"))?),
    };
    let mut values = Vec::new();
    for l in lines {
        let mut it = l.split_whitespace();
        let (Some(name), Some(v), None) = (it.next(), it.next(), it.next()) else {
            return Err(format!("bad value line '{l}'"));
        };
        let v: f64 = v.parse().map_err(|_| format!("bad value in line '{l}'"))?;
        values.push((name.to_string(), v));
    }
    Ok(ParsedSolution { status, objective, values })
}

/// Renders a result in the solution-file format.
pub fn write_solution_file(model: &ModelIR, result: &SolveResult) -> String {
    let mut out = format!("{}\n", result.status.token());
    match result.objective {
        Some(f) => out.push_str(&format!("{f:?}\n")),
        None => out.push_str("none\n"),
    }
    if let Some(x) = &result.x {
        for (v, xi) in model.variables.iter().zip(x) {
            out.push_str(&format!("{} {:?}\n", v.name, xi));
        }
    }
    out
}

/// Maps named values onto the model's variables, completing auxiliaries
/// from the original block when they are absent.
fn assemble(model: &ModelIR, values: &[(String, f64)]) -> Result<Vec<f64>, String> {
    let index: HashMap<&str, usize> = model
        .variables
        .iter()
        .enumerate()
        .map(|(j, v)| (v.name.as_str(), j))
        .collect();
    let mut x = vec![f64::NAN; model.n_vars()];
    for (name, v) in values {
        let j = *index.get(name.as_str()).ok_or_else(|| format!("unknown variable '{name}'"))?;
        x[j] = *v;
    }
    if x.iter().all(|v| v.is_finite()) {
        return Ok(x);
    }
    if let Some(j) = (0..model.n_original).find(|&j| !x[j].is_finite()) {
        return Err(format!("missing value for '{}'", model.variables[j].name));
    }
    let mut full = model.complete(&x[..model.n_original]);
    for (j, v) in x.iter().enumerate() {
        if v.is_finite() {
            full[j] = *v;
        }
    }
    Ok(full)
}

#[derive(Debug, Clone)]
pub struct ExternalBackend {
    pub executable: PathBuf,
}

impl ExternalBackend {
    pub fn new(executable: impl Into<PathBuf>) -> Self {
        Self { executable: executable.into() }
    }

    /// Backend configured by [`EXTERNAL_SOLVER_ENV`].
    pub fn from_env() -> Option<Self> {
        std::env::var_os(EXTERNAL_SOLVER_ENV).map(Self::new)
    }
}

fn drain(mut r: impl Read + Send + 'static) -> std::thread::JoinHandle<String> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = r.read_to_end(&mut buf);
        String::from_utf8_lossy(&buf).into_owned()
    })
}

impl SolverBackend for ExternalBackend {
    fn name(&self) -> &str {
        "external"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            convex_miqcqp: true,
            milp: true,
            nonconvex_miqcqp: true,
            continuous_convex: true,
            local_nlp: false,
        }
    }

    fn solve(&self, req: &SolveRequest) -> SolveResult {
        let start = Instant::now();
        let dir = match tempfile::tempdir() {
            Ok(d) => d,
            Err(e) => return SolveResult::error(format!("temp dir: {e}"), start),
        };
        let model_path = dir.path().join("model.json");
        let sol_path = dir.path().join("solution.txt");
        if let Err(e) = std::fs::write(&model_path, req.model.to_json()) {
            return SolveResult::error(format!("writing model: {e}"), start);
        }
        let mut child = match Command::new(&self.executable)
            .arg(&model_path)
            .arg(&sol_path)
            .arg(format!("{}", req.time_limit_s))
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
        {
            Ok(c) => c,
            Err(e) => return SolveResult::error(format!("cannot run {}: {e}", self.executable.display()), start),
        };
        let out = drain(child.stdout.take().expect("piped stdout"));
        let err = drain(child.stderr.take().expect("piped stderr"));
        let hard_limit = Duration::from_secs_f64(2.0 * req.time_limit_s + 1.0);
        let status = loop {
            match child.try_wait() {
                Ok(Some(s)) => break Some(s),
                Ok(None) => {}
                Err(_) => break None,
            }
            let cancelled = req.cancel.as_ref().is_some_and(|c| c.is_cancelled());
            if start.elapsed() > hard_limit || cancelled {
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        let captured = format!(
            "stdout:\n{}\nstderr:\n{}",
            out.join().unwrap_or_default(),
            err.join().unwrap_or_default()
        );
        let Some(status) = status else {
            let mut r = SolveResult::error(format!("solver stopped after the time limit\n{captured}"), start);
            r.status = SolveStatus::TimeLimitNoSolution;
            r.timed_out = true;
            return r;
        };
        if !status.success() {
            return SolveResult::error(format!("solver exited with {status}\n{captured}"), start);
        }
        let text = match std::fs::read_to_string(&sol_path) {
            Ok(t) => t,
            Err(e) => return SolveResult::error(format!("no solution file: {e}\n{captured}"), start),
        };
        let parsed = match parse_solution_file(&text) {
            Ok(p) => p,
            Err(e) => return SolveResult::error(format!("unparsable solution: {e}\n{captured}"), start),
        };
        let mut result = SolveResult {
            status: parsed.status,
            x: None,
            objective: None,
            dual_bound: None,
            wall_time_s: 0.0,
            nodes: 0,
            timed_out: false,
            message: None,
        };
        if parsed.status.has_solution() {
            let x = match assemble(&req.model, &parsed.values) {
                Ok(x) => x,
                Err(e) => return SolveResult::error(format!("{e}\n{captured}"), start),
            };
            let ev = req.model.evaluate(&x);
            if ev.max_violation > ACCEPT_TOL {
                return SolveResult::error(
                    format!("returned point violates the model by {:.3e}\n{captured}", ev.max_violation),
                    start,
                );
            }
            result.objective = Some(ev.objective);
            result.x = Some(x);
        }
        result.wall_time_s = start.elapsed().as_secs_f64();
        result
    }
}
