//! `miqcqp`: classify, solve, benchmark and compare runs on QPLIB files.

use clap::{Parser, Subcommand, ValueEnum};
use miqcqp_core::heuristics::PumpConfig;
use miqcqp_core::instance::{classify, parse_qplib, MiqcqpInstance, ObjectiveSense, ProblemClass};
use miqcqp_core::metrics::{
    compare, compare_sets, parse_best_known, primal_gap, records_to_csv, summarize, BenchRecord, Comparison,
};
use miqcqp_core::pipeline::{run_pipeline, PipelineConfig, PipelineResult};
use miqcqp_core::solver::{ExternalBackend, InternalBackend, SolverBackend, EXTERNAL_SOLVER_ENV};
use miqcqp_core::spectral::ShiftRule;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.into(), source })?;
    }
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.into(), source })
}

fn load_instance(path: &Path) -> Result<MiqcqpInstance, CliError> {
    let mut inst = parse_qplib(&read(path)?).map_err(|e| CliError::Parse { path: path.into(), message: e.to_string() })?;
    if inst.name.is_empty() {
        inst.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    Ok(inst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Backend {
    Internal,
    External,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    Classic,
    Safe,
}

impl From<RuleArg> for ShiftRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Classic => ShiftRule::Classic,
            RuleArg::Safe => ShiftRule::Safe,
        }
    }
}

#[derive(Debug, Clone, clap::Args)]
struct RunArgs {
    /// Global wall-clock budget per instance in seconds.
    #[arg(long, default_value_t = 300.0)]
    time_limit: f64,
    /// Concurrent local-branching subproblems (at most one per core).
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Weight of the previous û in fixed-point updates.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "safe")]
    shift_rule: RuleArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Subproblem solver; `external` runs the executable named by
    /// MIQCQP_EXTERNAL_SOLVER.
    #[arg(long, value_enum, default_value = "internal")]
    backend: Backend,
    /// Run the pump race sequentially for reproducible output.
    #[arg(long)]
    deterministic: bool,
    /// Skip the local-branching phase.
    #[arg(long)]
    no_local_branching: bool,
}

impl RunArgs {
    fn validate(&self) -> Result<(), CliError> {
        if !(self.time_limit > 0.0) {
            return Err(CliError::Usage("--time-limit must be positive".into()));
        }
        if self.workers == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(CliError::Usage("--alpha must lie in (0, 1]".into()));
        }
        Ok(())
    }

    fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            time_limit_s: self.time_limit,
            workers: self.workers,
            pump: PumpConfig {
                alpha: self.alpha,
                seed: self.seed,
                shift_rule: self.shift_rule.into(),
                deterministic: self.deterministic,
                ..PumpConfig::default()
            },
            no_local_branching: self.no_local_branching,
            ..PipelineConfig::default()
        }
    }

    fn backend(&self) -> Result<Arc<dyn SolverBackend>, CliError> {
        match self.backend {
            Backend::Internal => Ok(Arc::new(InternalBackend)),
            Backend::External => ExternalBackend::from_env()
                .map(|b| Arc::new(b) as Arc<dyn SolverBackend>)
                .ok_or_else(|| CliError::Usage(format!("--backend external requires {EXTERNAL_SOLVER_ENV}"))),
        }
    }

    fn echo(&self) -> RunConfigEcho {
        RunConfigEcho {
            time_limit_s: self.time_limit,
            workers: self.workers,
            alpha: self.alpha,
            shift_rule: match self.shift_rule {
                RuleArg::Classic => "classic",
                RuleArg::Safe => "safe",
            },
            seed: self.seed,
            backend: self.backend,
            deterministic: self.deterministic,
            local_branching: !self.no_local_branching,
        }
    }
}

#[derive(Parser)]
#[command(name = "miqcqp", version, about = "Primal heuristics for nonconvex MIQCQPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the problem class and size of each instance.
    Classify { files: Vec<PathBuf> },
    /// Run the heuristic pipeline on one instance and emit a JSON result.
    Solve {
        file: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Write the JSON result here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Best-known values (CSV with columns instance,objective) for the
        /// gap and primal-integral fields.
        #[arg(long)]
        best_known: Option<PathBuf>,
        /// Also write the instance model in the solver-exchange JSON format.
        #[arg(long)]
        dump_json: Option<PathBuf>,
    },
    /// Run every `.qplib` file of a directory and write per-instance and
    /// per-class tables.
    Bench {
        dir: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Output directory for bench.csv, summary.json and results.json.
        #[arg(long, default_value = "bench_results")]
        out: PathBuf,
        #[arg(long)]
        best_known: Option<PathBuf>,
    },
    /// Compare two result sets instance by instance.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunConfigEcho {
    time_limit_s: f64,
    workers: usize,
    alpha: f64,
    shift_rule: &'static str,
    seed: u64,
    backend: Backend,
    deterministic: bool,
    local_branching: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunMetrics {
    best_known: Option<f64>,
    gap_percent: Option<f64>,
    eps_gap_hit: Option<bool>,
    primal_integral: Option<f64>,
    fft: f64,
}

/// Result JSON written by `solve` and collected by `bench`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunOutput {
    instance: String,
    class: ProblemClass,
    found: bool,
    /// Objective in the file's sense.
    objective: Option<f64>,
    /// Objective in minimization form, used for comparisons.
    objective_min: Option<f64>,
    solution: Option<Vec<f64>>,
    /// `[seconds, objective]` pairs in the file's sense.
    trace: Vec<(f64, f64)>,
    metrics: RunMetrics,
    method: String,
    wall_time_s: f64,
    details: serde_json::Value,
    config: serde_json::Value,
}

fn record_of(inst: &MiqcqpInstance, r: &PipelineResult, best_known: Option<f64>, horizon: f64) -> BenchRecord {
    let events = r.trace.map_values(|v| inst.reported_objective(v));
    let mut rec = BenchRecord::from_trace(&r.instance, r.class, &events, horizon, best_known, r.wall_time_s);
    rec.comparison = match (r.objective, best_known) {
        (Some(v), Some(b)) => Some(compare(v, inst.reported_objective(b))),
        (None, Some(_)) => Some(Comparison::None),
        _ => None,
    };
    rec
}

fn run_output(inst: &MiqcqpInstance, r: PipelineResult, rec: &BenchRecord, run: &RunArgs) -> RunOutput {
    let details = serde_json::json!({
        "pump_terminated_by": r.pump_terminated_by,
        "pump_time_s": r.pump_time_s,
        "local_branching": r.local_branching,
        "sense": match inst.sense { ObjectiveSense::Minimize => "minimize", ObjectiveSense::Maximize => "maximize" },
        "gap_convention": "no solution: gap 100 and primal integral equal to the time limit",
    });
    RunOutput {
        instance: r.instance.clone(),
        class: r.class,
        found: r.found,
        objective: r.reported_objective,
        objective_min: r.objective,
        solution: r.x.clone(),
        trace: r.trace.map_values(|v| inst.reported_objective(v)),
        metrics: RunMetrics {
            best_known: rec.best_known,
            gap_percent: rec.gap_percent,
            eps_gap_hit: rec.eps_gap_hit,
            primal_integral: rec.primal_integral,
            fft: rec.fft,
        },
        method: serde_json::to_value(r.method).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        wall_time_s: r.wall_time_s,
        details,
        config: serde_json::to_value(run.echo()).expect("config serializes"),
    }
}

fn best_known_table(path: Option<&PathBuf>) -> Result<BTreeMap<String, f64>, CliError> {
    match path {
        None => Ok(BTreeMap::new()),
        Some(p) => parse_best_known(&read(p)?).map_err(|e| CliError::Parse { path: p.clone(), message: e.to_string() }),
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn cmd_classify(files: &[PathBuf]) -> Result<ExitCode, CliError> {
    for f in files {
        let inst = load_instance(f)?;
        let row = serde_json::json!({
            "instance": inst.name,
            "class": classify(&inst),
            "n": inst.n,
            "integers": inst.integer_indices().len(),
            "quadratic_constraints": inst.m1(),
            "linear_constraints": inst.m2(),
        });
        println!("{row}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(
    file: &Path,
    run: &RunArgs,
    out: Option<&Path>,
    best_known: Option<&PathBuf>,
    dump_json: Option<&Path>,
) -> Result<ExitCode, CliError> {
    run.validate()?;
    let inst = load_instance(file)?;
    if let Some(p) = dump_json {
        write(p, &miqcqp_core::convexify::build_original(&inst).to_json())?;
    }
    let table = best_known_table(best_known)?;
    let r = run_pipeline(&inst, &run.pipeline(), run.backend()?);
    let rec = record_of(&inst, &r, table.get(&inst.name).copied(), run.time_limit);
    let found = r.found;
    let text = to_json(&run_output(&inst, r, &rec, run));
    match out {
        Some(p) => write(p, &text)?,
        None => print!("{text}"),
    }
    Ok(if found { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn qplib_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|source| CliError::Io { path: dir.into(), source })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("qplib")))
        .collect();
    files.sort();
    Ok(files)
}

fn cmd_bench(dir: &Path, run: &RunArgs, out: &Path, best_known: Option<&PathBuf>) -> Result<ExitCode, CliError> {
    run.validate()?;
    let table = best_known_table(best_known)?;
    let backend = run.backend()?;
    let mut records = Vec::new();
    let mut outputs = Vec::new();
    for f in qplib_files(dir)? {
        let inst = load_instance(&f)?;
        log::info!("solving {}", inst.name);
        let r = run_pipeline(&inst, &run.pipeline(), backend.clone());
        let rec = record_of(&inst, &r, table.get(&inst.name).copied(), run.time_limit);
        outputs.push(run_output(&inst, r, &rec, run));
        records.push(rec);
    }
    let csv = records_to_csv(&records).map_err(|e| CliError::Usage(e.to_string()))?;
    write(&out.join("bench.csv"), &csv)?;
    let summary = serde_json::json!({
        "classes": summarize(&records),
        "averages": "shifted geometric means with shift 1: exp(mean(ln(v + 1))) - 1",
        "gap_convention": "no solution: gap 100 and primal integral equal to the time limit; no best-known value: gap fields null",
        "config": run.echo(),
    });
    write(&out.join("summary.json"), &to_json(&summary))?;
    write(&out.join("results.json"), &to_json(&outputs))?;
    print!("{csv}");
    Ok(ExitCode::SUCCESS)
}

/// Reads a result set: a JSON array of results, a single result, or a
/// directory of such files.
fn load_results(path: &Path) -> Result<Vec<RunOutput>, CliError> {
    let parse = |p: &Path| -> Result<Vec<RunOutput>, CliError> {
        let text = read(p)?;
        let err = |e: serde_json::Error| CliError::Parse { path: p.into(), message: e.to_string() };
        match serde_json::from_str::<Vec<RunOutput>>(&text) {
            Ok(v) => Ok(v),
            Err(_) => serde_json::from_str::<RunOutput>(&text).map(|r| vec![r]).map_err(err),
        }
    };
    if path.is_dir() {
        let entries = std::fs::read_dir(path).map_err(|source| CliError::Io { path: path.into(), source })?;
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        files.sort();
        let mut all = Vec::new();
        for f in files {
            all.extend(parse(&f)?);
        }
        Ok(all)
    } else {
        parse(path)
    }
}

fn cmd_compare(a: &Path, b: &Path, out: Option<&Path>) -> Result<ExitCode, CliError> {
    let (ra, rb) = (load_results(a)?, load_results(b)?);
    let key = |rs: &[RunOutput]| -> BTreeMap<String, Option<f64>> {
        rs.iter().map(|r| (r.instance.clone(), r.objective_min.filter(|_| r.found))).collect()
    };
    let classes: BTreeMap<String, ProblemClass> = ra.iter().map(|r| (r.instance.clone(), r.class)).collect();
    let cmp = compare_sets(&key(&ra), &key(&rb)).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for (inst, c) in &cmp {
        for group in [classes[inst].to_string(), "All".to_string()] {
            *counts.entry(group).or_default().entry(c.to_string()).or_default() += 1;
        }
    }
    let gaps: BTreeMap<&String, Option<f64>> = cmp
        .keys()
        .map(|k| {
            let va = ra.iter().find(|r| &r.instance == k).and_then(|r| r.objective_min);
            let vb = rb.iter().find(|r| &r.instance == k).and_then(|r| r.objective_min);
            (k, va.zip(vb).map(|(x, y)| primal_gap(x, y)))
        })
        .collect();
    let report = serde_json::json!({ "per_instance": cmp, "relative_difference_percent": gaps, "counts": counts });
    let text = to_json(&report);
    match out {
        Some(p) => write(p, &text)?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Classify { files } => cmd_classify(files),
        Command::Solve { file, run, out, best_known, dump_json } => {
            cmd_solve(file, run, out.as_deref(), best_known.as_ref(), dump_json.as_deref())
        }
        Command::Bench { dir, run, out, best_known } => cmd_bench(dir, run, out, best_known.as_ref()),
        Command::Compare { a, b, out } => cmd_compare(a, b, out.as_deref()),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })
}
