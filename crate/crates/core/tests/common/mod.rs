//! Shared oracles and fixtures for the integration tests.
#![allow(dead_code)]

use miqcqp_core::instance::{parse_qplib, MiqcqpInstance};
use nalgebra::{DMatrix, SymmetricEigen};
use std::path::{Path, PathBuf};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

fn qplib_in(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.expect("directory entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "qplib"))
        .collect();
    files.sort();
    files
}

/// Checked-in copies of the desk corpus.
pub fn corpus_files() -> Vec<PathBuf> {
    qplib_in(&data_dir().join("corpus"))
}

/// Hand-written files in the public QPLIB layout, plus any `.qplib` files
/// found in the directory named by `QPLIB_DIR`.
pub fn qplib_files() -> Vec<PathBuf> {
    let mut files = qplib_in(&data_dir().join("qplib"));
    if let Some(dir) = std::env::var_os("QPLIB_DIR") {
        files.extend(qplib_in(Path::new(&dir)));
    }
    files
}

pub fn load(path: &Path) -> MiqcqpInstance {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_qplib(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Smallest eigenvalue by dense symmetric decomposition.
pub fn dense_min_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Every assignment of `n` binary values.
pub fn binary_points(n: usize) -> impl Iterator<Item = Vec<f64>> {
    (0u64..(1u64 << n)).map(move |m| (0..n).map(|k| ((m >> k) & 1) as f64).collect())
}
