//! Problem data, classification, normalization and evaluation.

mod matrix;
pub mod qplib;

pub use matrix::SymSparseMatrix;
pub use qplib::{parse_qplib, write_qplib};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Tolerance used when deciding whether a value is integral.
pub const INTEGRALITY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl InstanceError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        InstanceError::Parse {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveSense {
    Minimize,
    Maximize,
}

/// `x^T q x + a^T x + constant`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticObjective {
    pub q: SymSparseMatrix,
    pub a: Vec<f64>,
    pub constant: f64,
}

impl QuadraticObjective {
    pub fn zeros(n: usize) -> Self {
        Self {
            q: SymSparseMatrix::zeros(n),
            a: vec![0.0; n],
            constant: 0.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.q.quad_form(x) + dot(&self.a, x) + self.constant
    }

    /// Gradient `2 q x + a`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.q.mul_vec(x);
        for (gi, ai) in g.iter_mut().zip(&self.a) {
            *gi = 2.0 * *gi + ai;
        }
        g
    }
}

/// `x^T q x + a^T x <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadConstraint {
    pub q: SymSparseMatrix,
    pub a: Vec<f64>,
    pub rhs: f64,
}

impl QuadConstraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.q.quad_form(x) + dot(&self.a, x)
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        (self.activity(x) - self.rhs).max(0.0)
    }
}

/// Sparse linear row `sum coeffs_j x_j <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, v)| v * x[j]).sum()
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        (self.activity(x) - self.rhs).max(0.0)
    }
}

/// Bounded MIQCQP in minimization form.
///
/// Maximization problems are stored with a negated objective; `sense`
/// records the original direction so reported values can be flipped back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiqcqpInstance {
    pub name: String,
    pub n: usize,
    pub objective: QuadraticObjective,
    pub quad_constraints: Vec<QuadConstraint>,
    pub linear: Vec<LinearRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub integer: Vec<bool>,
    pub sense: ObjectiveSense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemClass {
    #[serde(rename = "MIBQP")]
    Mibqp,
    #[serde(rename = "MIQP")]
    Miqp,
    #[serde(rename = "MIQCP")]
    Miqcp,
}

impl fmt::Display for ProblemClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemClass::Mibqp => "MIBQP",
            ProblemClass::Miqp => "MIQP",
            ProblemClass::Miqcp => "MIQCP",
        })
    }
}

impl MiqcqpInstance {
    /// Empty box-constrained instance on `[0, 1]^n` with all variables
    /// continuous.
    pub fn new(name: impl Into<String>, n: usize) -> Self {
        Self {
            name: name.into(),
            n,
            objective: QuadraticObjective::zeros(n),
            quad_constraints: Vec::new(),
            linear: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![1.0; n],
            integer: vec![false; n],
            sense: ObjectiveSense::Minimize,
        }
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        let n = self.n;
        let bad = |m: String| Err(InstanceError::Invalid(m));
        if self.lower.len() != n || self.upper.len() != n || self.integer.len() != n {
            return bad("bound or integrality vector length differs from n".into());
        }
        if self.objective.q.dim() != n || self.objective.a.len() != n {
            return bad("objective dimension mismatch".into());
        }
        if !self.objective.constant.is_finite() {
            return bad("objective constant is not finite".into());
        }
        for (k, c) in self.quad_constraints.iter().enumerate() {
            if c.q.dim() != n || c.a.len() != n {
                return bad(format!("quadratic constraint {k} dimension mismatch"));
            }
            if !c.rhs.is_finite() || c.a.iter().any(|v| !v.is_finite()) {
                return bad(format!("quadratic constraint {k} has non-finite data"));
            }
        }
        for (k, r) in self.linear.iter().enumerate() {
            if r.coeffs.iter().any(|&(j, v)| j >= n || !v.is_finite()) || !r.rhs.is_finite() {
                return bad(format!("linear row {k} is malformed"));
            }
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if !l.is_finite() || !u.is_finite() {
                return bad(format!("variable {j} has an infinite bound"));
            }
            if l > u {
                return bad(format!("variable {j} has lower bound {l} above upper bound {u}"));
            }
            if self.integer[j] && (l.fract() != 0.0 || u.fract() != 0.0) {
                return bad(format!("integer variable {j} has fractional bounds"));
            }
        }
        Ok(())
    }

    pub fn m1(&self) -> usize {
        self.quad_constraints.len()
    }

    pub fn m2(&self) -> usize {
        self.linear.len()
    }

    pub fn integer_indices(&self) -> Vec<usize> {
        (0..self.n).filter(|&j| self.integer[j]).collect()
    }

    pub fn continuous_indices(&self) -> Vec<usize> {
        (0..self.n).filter(|&j| !self.integer[j]).collect()
    }

    /// Integer variables with bounds exactly `[0, 1]`.
    pub fn binary_indices(&self) -> Vec<usize> {
        (0..self.n).filter(|&j| self.is_binary(j)).collect()
    }

    pub fn is_binary(&self, j: usize) -> bool {
        self.integer[j] && self.lower[j] == 0.0 && self.upper[j] == 1.0
    }

    /// Objective value in the file's original sense.
    pub fn reported_objective(&self, internal: f64) -> f64 {
        match self.sense {
            ObjectiveSense::Minimize => internal,
            ObjectiveSense::Maximize => -internal,
        }
    }

    /// Every matrix `Q^k`, objective first.
    pub fn matrices(&self) -> impl Iterator<Item = &SymSparseMatrix> {
        std::iter::once(&self.objective.q).chain(self.quad_constraints.iter().map(|c| &c.q))
    }

    pub fn box_center(&self) -> Vec<f64> {
        (0..self.n)
            .map(|j| {
                let c = 0.5 * (self.lower[j] + self.upper[j]);
                if self.integer[j] {
                    c.round().clamp(self.lower[j], self.upper[j])
                } else {
                    c
                }
            })
            .collect()
    }
}

pub fn classify(inst: &MiqcqpInstance) -> ProblemClass {
    if inst.m1() >= 1 {
        ProblemClass::Miqcp
    } else if inst.m2() >= 1 {
        ProblemClass::Miqp
    } else {
        ProblemClass::Mibqp
    }
}

/// Result of [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub max_violation: f64,
}

pub fn evaluate(inst: &MiqcqpInstance, x: &[f64]) -> Evaluation {
    assert_eq!(x.len(), inst.n, "point length differs from n");
    let objective = inst.objective.eval(x);
    let mut viol: f64 = 0.0;
    for c in &inst.quad_constraints {
        viol = viol.max(c.violation(x));
    }
    for r in &inst.linear {
        viol = viol.max(r.violation(x));
    }
    for j in 0..inst.n {
        viol = viol
            .max(inst.lower[j] - x[j])
            .max(x[j] - inst.upper[j]);
        if inst.integer[j] {
            viol = viol.max((x[j] - x[j].round()).abs());
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        viol = f64::INFINITY;
    }
    Evaluation {
        objective,
        max_violation: viol,
    }
}

pub fn check_feasible(inst: &MiqcqpInstance, x: &[f64], tol: f64) -> bool {
    debug_assert!(tol >= 0.0);
    x.len() == inst.n && evaluate(inst, x).max_violation <= tol
}

/// Instance shifted so every lower bound is zero.
///
/// `original x = inst-space y + shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedInstance {
    pub inst: MiqcqpInstance,
    pub shift: Vec<f64>,
}

impl NormalizedInstance {
    pub fn to_original(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.shift).map(|(a, b)| a + b).collect()
    }

    pub fn from_original(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.shift).map(|(a, b)| a - b).collect()
    }
}

impl std::ops::Deref for NormalizedInstance {
    type Target = MiqcqpInstance;
    fn deref(&self) -> &MiqcqpInstance {
        &self.inst
    }
}

/// Substitutes `x = y + l` so that `0 <= y <= u - l`.
pub fn normalize(inst: &MiqcqpInstance) -> NormalizedInstance {
    let l = inst.lower.clone();
    let mut out = inst.clone();
    if l.iter().all(|&v| v == 0.0) {
        return NormalizedInstance {
            inst: out,
            shift: l,
        };
    }
    // x^T Q x + a^T x = y^T Q y + (a + 2 Q l)^T y + l^T Q l + a^T l
    let shift_quadratic = |q: &SymSparseMatrix, a: &[f64]| -> (Vec<f64>, f64) {
        let ql = q.mul_vec(&l);
        let a_new = a.iter().zip(&ql).map(|(ai, qi)| ai + 2.0 * qi).collect();
        let c = dot(&l, &ql) + dot(a, &l);
        (a_new, c)
    };
    let (a0, c0) = shift_quadratic(&inst.objective.q, &inst.objective.a);
    out.objective.a = a0;
    out.objective.constant += c0;
    for c in &mut out.quad_constraints {
        let (ak, ck) = shift_quadratic(&c.q, &c.a);
        c.a = ak;
        c.rhs -= ck;
    }
    for r in &mut out.linear {
        let al: f64 = r.coeffs.iter().map(|&(j, v)| v * l[j]).sum();
        r.rhs -= al;
    }
    for j in 0..inst.n {
        out.upper[j] = inst.upper[j] - l[j];
        out.lower[j] = 0.0;
    }
    NormalizedInstance {
        inst: out,
        shift: l,
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
