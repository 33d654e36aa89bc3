//! `miqcqp-adapter <model.json> <solution.txt> <time-limit>`: solves a
//! model JSON with the internal backend and writes a solution file. Useful
//! as an `MIQCQP_EXTERNAL_SOLVER` for exercising the external path.

use miqcqp_core::convexify::ModelIR;
use miqcqp_core::solver::{write_solution_file, InternalBackend, SolveRequest, SolverBackend};
use std::process::ExitCode;

fn run(args: &[String]) -> Result<(), String> {
    let [model_path, sol_path, limit] = args else {
        return Err("usage: miqcqp-adapter <model.json> <solution.txt> <time-limit>".into());
    };
    let limit: f64 = limit.parse().map_err(|_| format!("bad time limit '{limit}'"))?;
    let text = std::fs::read_to_string(model_path).map_err(|e| format!("{model_path}: {e}"))?;
    let model = ModelIR::from_json(&text).map_err(|e| format!("{model_path}: {e}"))?;
    let result = InternalBackend.solve(&SolveRequest::new(model.clone(), limit));
    std::fs::write(sol_path, write_solution_file(&model, &result)).map_err(|e| format!("{sol_path}: {e}"))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
