//! Solver-neutral optimization model.

use crate::instance::SymSparseMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Continuous,
    Integer,
    Binary,
}

impl VarKind {
    pub fn is_integral(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

/// Where a model variable comes from. Auxiliary origins carry enough data
/// to recompute the variable from the original coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VarOrigin {
    Original { index: usize },
    /// `t` in `x_var = offset + sum 2^bit t`.
    ExpansionBit { var: usize, bit: usize, offset: f64 },
    /// Linearized square `X = x_var^2`.
    Square { var: usize },
    /// Product of two expansion bits of `var`.
    BitProduct { var: usize, h1: usize, h2: usize, offset: f64 },
    /// `delta >= target - x_var`, `delta >= 0`.
    Deficiency { var: usize, target: f64 },
    /// Slack of quadratic row `row`.
    RowSlack { row: usize },
    /// `d >= |x_var - reference|`.
    L1Distance { var: usize, reference: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
    pub origin: VarOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, v)| v * x[j]).sum()
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        let a = self.activity(x);
        match self.sense {
            Sense::Le => (a - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - a).max(0.0),
            Sense::Eq => (a - self.rhs).abs(),
        }
    }
}

/// `x^T q x + coeffs·x <= rhs`; `q` indexes the leading variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadRow {
    pub q: SymSparseMatrix,
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl QuadRow {
    pub fn activity(&self, x: &[f64]) -> f64 {
        quad_on_prefix(&self.q, x) + self.coeffs.iter().map(|&(j, v)| v * x[j]).sum::<f64>()
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        (self.activity(x) - self.rhs).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelObjective {
    pub q: SymSparseMatrix,
    pub linear: Vec<(usize, f64)>,
    pub constant: f64,
}

impl ModelObjective {
    pub fn eval(&self, x: &[f64]) -> f64 {
        quad_on_prefix(&self.q, x) + self.linear.iter().map(|&(j, v)| v * x[j]).sum::<f64>() + self.constant
    }
}

fn quad_on_prefix(q: &SymSparseMatrix, x: &[f64]) -> f64 {
    if q.is_empty() {
        0.0
    } else {
        q.quad_form(&x[..q.dim()])
    }
}

/// Minimization model consumed by every backend.
///
/// The first `n_original` variables are the instance variables in order;
/// quadratic matrices act on a prefix of the variable vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelIR {
    pub name: String,
    pub variables: Vec<Variable>,
    pub linear_constraints: Vec<LinearConstraint>,
    pub quad_constraints: Vec<QuadRow>,
    pub objective: ModelObjective,
    /// Objective and every quadratic row are convex.
    pub convex: bool,
    pub n_original: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelEvaluation {
    pub objective: f64,
    pub max_violation: f64,
}

impl ModelIR {
    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.lower).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.upper).collect()
    }

    pub fn integer_vars(&self) -> Vec<usize> {
        (0..self.n_vars())
            .filter(|&j| self.variables[j].kind.is_integral())
            .collect()
    }

    pub fn has_integers(&self) -> bool {
        self.variables.iter().any(|v| v.kind.is_integral())
    }

    pub fn is_linear(&self) -> bool {
        self.objective.q.is_empty() && self.quad_constraints.is_empty()
    }

    /// Variable name to origin.
    pub fn metadata(&self) -> BTreeMap<String, VarOrigin> {
        self.variables
            .iter()
            .map(|v| (v.name.clone(), v.origin.clone()))
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn bound_violation(&self, x: &[f64]) -> f64 {
        self.variables
            .iter()
            .zip(x)
            .map(|(v, &xi)| {
                let mut viol = (v.lower - xi).max(xi - v.upper).max(0.0);
                if v.kind.is_integral() {
                    viol = viol.max((xi - xi.round()).abs());
                }
                viol
            })
            .fold(0.0, f64::max)
    }

    /// Violation of rows only (no bounds, no integrality).
    pub fn row_violation(&self, x: &[f64]) -> f64 {
        let lin = self
            .linear_constraints
            .iter()
            .map(|c| c.violation(x))
            .fold(0.0, f64::max);
        self.quad_constraints
            .iter()
            .map(|c| c.violation(x))
            .fold(lin, f64::max)
    }

    pub fn evaluate(&self, x: &[f64]) -> ModelEvaluation {
        assert_eq!(x.len(), self.n_vars(), "point length differs from model size");
        let mut viol = self.row_violation(x).max(self.bound_violation(x));
        if x.iter().any(|v| !v.is_finite()) {
            viol = f64::INFINITY;
        }
        ModelEvaluation {
            objective: self.objective.eval(x),
            max_violation: viol,
        }
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.n_vars() && self.evaluate(x).max_violation <= tol
    }

    /// Copy with the given variables fixed to values.
    pub fn with_fixed(&self, fixes: &[(usize, f64)]) -> ModelIR {
        let mut m = self.clone();
        for &(j, v) in fixes {
            m.variables[j].lower = v;
            m.variables[j].upper = v;
        }
        m
    }

    /// Copy with integrality dropped.
    pub fn continuous_relaxation(&self) -> ModelIR {
        let mut m = self.clone();
        for v in &mut m.variables {
            v.kind = VarKind::Continuous;
        }
        m
    }

    /// Extends a point given on the original variables to every model
    /// variable using the recorded origins. Bits take the binary
    /// representation of the rounded value.
    pub fn complete(&self, x_original: &[f64]) -> Vec<f64> {
        assert!(x_original.len() >= self.n_original);
        let mut x = vec![0.0; self.n_vars()];
        x[..self.n_original].copy_from_slice(&x_original[..self.n_original]);
        let bit = |x: &[f64], var: usize, bit: usize, offset: f64| -> f64 {
            let v = (x[var] - offset).round().max(0.0) as u64;
            ((v >> bit) & 1) as f64
        };
        for pass in 0..2 {
            for (j, var) in self.variables.iter().enumerate() {
                let value = match (&var.origin, pass) {
                    (VarOrigin::ExpansionBit { var, bit: b, offset }, 0) => bit(&x, *var, *b, *offset),
                    (VarOrigin::BitProduct { var, h1, h2, offset }, 0) => {
                        bit(&x, *var, *h1, *offset) * bit(&x, *var, *h2, *offset)
                    }
                    (VarOrigin::Square { var }, 0) => x[*var] * x[*var],
                    (VarOrigin::Deficiency { var, target }, 0) => (target - x[*var]).max(0.0),
                    (VarOrigin::L1Distance { var, reference }, 0) => (x[*var] - reference).abs(),
                    (VarOrigin::RowSlack { row }, 1) => {
                        let r = &self.quad_constraints[*row];
                        let act: f64 = quad_on_prefix(&r.q, &x)
                            + r.coeffs
                                .iter()
                                .filter(|&&(k, _)| k != j)
                                .map(|&(k, v)| v * x[k])
                                .sum::<f64>();
                        let coef = r.coeffs.iter().find(|&&(k, _)| k == j).map_or(-1.0, |c| c.1);
                        ((act - r.rhs) / -coef).max(0.0)
                    }
                    _ => continue,
                };
                x[j] = value;
            }
        }
        x
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<ModelIR, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Incremental construction of a [`ModelIR`].
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    name: String,
    variables: Vec<Variable>,
    linear: Vec<LinearConstraint>,
    quad: Vec<QuadRow>,
    objective: ModelObjective,
    n_original: usize,
}

impl ModelBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            variables: Vec::new(),
            linear: Vec::new(),
            quad: Vec::new(),
            objective: ModelObjective {
                q: SymSparseMatrix::zeros(0),
                linear: Vec::new(),
                constant: 0.0,
            },
            n_original: 0,
        }
    }

    /// Starts from an existing model, keeping every component.
    pub fn from_model(m: &ModelIR) -> Self {
        Self {
            name: m.name.clone(),
            variables: m.variables.clone(),
            linear: m.linear_constraints.clone(),
            quad: m.quad_constraints.clone(),
            objective: m.objective.clone(),
            n_original: m.n_original,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        kind: VarKind,
        origin: VarOrigin,
    ) -> usize {
        if let VarOrigin::Original { .. } = origin {
            self.n_original = self.variables.len() + 1;
        }
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
            kind,
            origin,
        });
        self.variables.len() - 1
    }

    pub fn add_linear(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        let coeffs = merge(coeffs);
        self.linear.push(LinearConstraint { coeffs, sense, rhs });
    }

    pub fn add_quad(&mut self, q: SymSparseMatrix, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.quad.push(QuadRow {
            q,
            coeffs: merge(coeffs),
            rhs,
        });
        self.quad.len() - 1
    }

    pub fn set_objective(&mut self, q: SymSparseMatrix, linear: Vec<(usize, f64)>, constant: f64) {
        self.objective = ModelObjective {
            q,
            linear: merge(linear),
            constant,
        };
    }

    pub fn quad_rows_mut(&mut self) -> &mut Vec<QuadRow> {
        &mut self.quad
    }

    pub fn finish(self, convex: bool) -> ModelIR {
        ModelIR {
            name: self.name,
            variables: self.variables,
            linear_constraints: self.linear,
            quad_constraints: self.quad,
            objective: self.objective,
            convex,
            n_original: self.n_original,
        }
    }
}

/// Sums duplicate indices and drops zeros, keeping first-seen order.
pub fn merge(coeffs: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for (j, v) in coeffs {
        *acc.entry(j).or_insert(0.0) += v;
    }
    acc.into_iter().filter(|&(_, v)| v != 0.0).collect()
}
