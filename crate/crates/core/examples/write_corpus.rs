//! Writes the desk corpus as QPLIB files plus a best-known CSV.
//!
//! `cargo run --release -p miqcqp-core --example write_corpus -- <dir>`

use miqcqp_core::corpus::desk_corpus;
use miqcqp_core::instance::{evaluate, write_qplib};
use miqcqp_core::solver::brute_force;
use std::fmt::Write as _;
use std::path::PathBuf;

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "corpus".into()));
    std::fs::create_dir_all(&dir)?;
    let mut best = String::from("instance,objective\n");
    for e in desk_corpus() {
        std::fs::write(dir.join(format!("{}.qplib", e.instance.name)), write_qplib(&e.instance))?;
        // certified optimum where enumeration is cheap, else the planted point
        let value = if e.brute_forceable { brute_force(&e.instance, 201).objective } else { None }
            .unwrap_or_else(|| evaluate(&e.instance, &e.planted).objective);
        writeln!(best, "{},{value:?}", e.instance.name).expect("string write");
    }
    std::fs::write(dir.join("best_known.csv"), best)
}
