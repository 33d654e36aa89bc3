//! Model builders: the original problem, the `û`-parameterized convex
//! approximation and its `û = u` relaxation, the two feasibility-repair
//! models, `ℓ1` projections and local branching constraints.
//!
//! Approximations perturb each nonconvex `Q^k` by `-λ_k D_S` where `D_S` is
//! the diagonal indicator of the variables `Q^k` touches. The removed
//! `-λ_k x_i^2` terms are put back linearly: `x_i` for binaries, an exact
//! linearization `X_ii` for general integers and `û_i x_i` for continuous
//! variables.

mod model;

pub use model::{
    merge, LinearConstraint, ModelBuilder, ModelEvaluation, ModelIR, ModelObjective, QuadRow,
    Sense, VarKind, VarOrigin, Variable,
};

use crate::instance::{MiqcqpInstance, SymSparseMatrix};
use crate::spectral::{extreme_eigenvalues, ShiftRule, SpectralInfo, EIGEN_TOL};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the smallest eigenvalue of a perturbed matrix.
pub const PSD_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConvexifyError {
    #[error("variable {0} is fixed and cannot be expanded")]
    FixedVariable(usize),
    #[error("perturbed matrix {row} is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { row: usize, min_eig: f64 },
    #[error("approximations require lower bounds of zero; normalize the instance first")]
    NotNormalized,
    #[error("local branching needs at least one binary variable")]
    NoBinaries,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Number of bits needed to represent `0..=u-l`.
pub fn bit_count(lower: f64, upper: f64) -> usize {
    let range = (upper - lower).round() as u64;
    (64 - range.leading_zeros()) as usize
}

/// Binary expansion `x_source = offset + sum_h 2^h t_h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryExpansion {
    pub source: usize,
    pub bits: Vec<usize>,
    pub weights: Vec<f64>,
    pub offset: f64,
}

impl BinaryExpansion {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.offset + self.bits.iter().zip(&self.weights).map(|(&b, w)| w * x[b]).sum::<f64>()
    }
}

impl ModelBuilder {
    /// Adds the bits of variable `i` and the linking row. The bound
    /// `x_i <= u_i` stays on `x_i` since the bits can reach past it.
    pub fn binary_expand(&mut self, i: usize, lower: f64, upper: f64) -> Result<BinaryExpansion, ConvexifyError> {
        if upper <= lower {
            return Err(ConvexifyError::FixedVariable(i));
        }
        let nb = bit_count(lower, upper);
        let mut bits = Vec::with_capacity(nb);
        let mut weights = Vec::with_capacity(nb);
        let mut link = vec![(i, 1.0)];
        for h in 0..nb {
            let b = self.add_var(
                format!("t{i}_{h}"),
                0.0,
                1.0,
                VarKind::Binary,
                VarOrigin::ExpansionBit { var: i, bit: h, offset: lower },
            );
            let w = (1u64 << h) as f64;
            bits.push(b);
            weights.push(w);
            link.push((b, -w));
        }
        self.add_linear(link, Sense::Eq, lower);
        Ok(BinaryExpansion {
            source: i,
            bits,
            weights,
            offset: lower,
        })
    }

    /// Adds bit products `H_{h1 h2}` (`h1 <= h2`) with their RLT rows and a
    /// variable `X` equal to the square of the expanded variable on every
    /// integral bit pattern. Returns the index of `X`.
    pub fn build_h_linearization(&mut self, e: &BinaryExpansion) -> usize {
        let i = e.source;
        let l = e.offset;
        let n = e.bits.len();
        let reach: f64 = e.weights.iter().sum::<f64>() + l;
        let x_sq = self.add_var(
            format!("X{i}"),
            0.0,
            reach.abs().max(l.abs()).powi(2),
            VarKind::Continuous,
            VarOrigin::Square { var: i },
        );
        // X = l^2 + 2 l sum 2^h t_h + sum_{h1<=h2} w H
        let mut def = vec![(x_sq, 1.0)];
        for (&b, &w) in e.bits.iter().zip(&e.weights) {
            def.push((b, -2.0 * l * w));
        }
        for h1 in 0..n {
            for h2 in h1..n {
                let hv = self.add_var(
                    format!("H{i}_{h1}_{h2}"),
                    0.0,
                    1.0,
                    VarKind::Binary,
                    VarOrigin::BitProduct { var: i, h1, h2, offset: l },
                );
                let (t1, t2) = (e.bits[h1], e.bits[h2]);
                self.add_linear(vec![(hv, 1.0), (t1, -1.0)], Sense::Le, 0.0);
                self.add_linear(vec![(hv, 1.0), (t2, -1.0)], Sense::Le, 0.0);
                self.add_linear(vec![(hv, 1.0), (t1, -1.0), (t2, -1.0)], Sense::Ge, -1.0);
                let mut w = (1u64 << (h1 + h2)) as f64;
                if h1 < h2 {
                    w *= 2.0;
                }
                def.push((hv, -w));
            }
        }
        self.add_linear(def, Sense::Eq, l * l);
        x_sq
    }

    fn add_original_vars(&mut self, inst: &MiqcqpInstance) {
        for j in 0..inst.n {
            let kind = if inst.is_binary(j) {
                VarKind::Binary
            } else if inst.integer[j] {
                VarKind::Integer
            } else {
                VarKind::Continuous
            };
            self.add_var(format!("x{j}"), inst.lower[j], inst.upper[j], kind, VarOrigin::Original { index: j });
        }
    }

    fn add_original_linear(&mut self, inst: &MiqcqpInstance) {
        for r in &inst.linear {
            self.add_linear(r.coeffs.clone(), Sense::Le, r.rhs);
        }
    }
}

fn dense_coeffs(a: &[f64]) -> Vec<(usize, f64)> {
    a.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(j, &v)| (j, v)).collect()
}

/// Per-matrix perturbation shifts; index 0 is the objective, `k` is
/// quadratic row `k - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shifts {
    pub rule: ShiftRule,
    pub values: Vec<f64>,
    pub supports: Vec<Vec<usize>>,
    pub infos: Vec<Option<SpectralInfo>>,
}

impl Shifts {
    /// Computes shifts on the support of each matrix. The continuous block
    /// used by the safe rule is the continuous part of that support.
    pub fn compute(inst: &MiqcqpInstance, rule: ShiftRule) -> Self {
        let mut values = Vec::new();
        let mut supports = Vec::new();
        let mut infos = Vec::new();
        for q in inst.matrices() {
            let support = q.support();
            if support.is_empty() {
                values.push(0.0);
                supports.push(support);
                infos.push(None);
                continue;
            }
            let sub = q.principal(&support);
            let beta: Vec<usize> = (0..support.len()).filter(|&k| !inst.integer[support[k]]).collect();
            let info = SpectralInfo::compute(&sub, &beta);
            values.push(info.shift(rule, sub.norm_inf()));
            supports.push(support);
            infos.push(Some(info));
        }
        Self {
            rule,
            values,
            supports,
            infos,
        }
    }

    /// Explicit shifts; supports are taken from the matrices.
    pub fn from_values(inst: &MiqcqpInstance, rule: ShiftRule, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), inst.m1() + 1);
        Self {
            rule,
            values,
            supports: inst.matrices().map(|q| q.support()).collect(),
            infos: vec![None; inst.m1() + 1],
        }
    }

    pub fn zeros(inst: &MiqcqpInstance) -> Self {
        Self::from_values(inst, ShiftRule::Classic, vec![0.0; inst.m1() + 1])
    }

    pub fn all_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Variables touched by at least one nonzero shift.
    pub fn perturbed(&self, n: usize) -> Vec<bool> {
        let mut p = vec![false; n];
        for (k, s) in self.supports.iter().enumerate() {
            if self.values[k] != 0.0 {
                for &i in s {
                    p[i] = true;
                }
            }
        }
        p
    }

    /// Continuous variables whose squares are replaced by `û_i x_i`.
    pub fn perturbed_continuous(&self, inst: &MiqcqpInstance) -> Vec<usize> {
        let p = self.perturbed(inst.n);
        (0..inst.n).filter(|&i| p[i] && !inst.integer[i]).collect()
    }
}

/// Reference values for the continuous squares, indexed by original
/// variable (entries for integer variables are ignored).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UHat {
    pub values: Vec<f64>,
}

impl UHat {
    /// `û = u`, the relaxation endpoint.
    pub fn upper(inst: &MiqcqpInstance) -> Self {
        Self {
            values: inst.upper.clone(),
        }
    }

    /// Clamps into `[0, cap_i]`, replacing non-finite values by the cap.
    pub fn clamped(values: Vec<f64>, cap: &[f64]) -> Self {
        let values = values
            .into_iter()
            .zip(cap)
            .map(|(v, &c)| if v.is_finite() { v.clamp(0.0, c.max(0.0)) } else { c.max(0.0) })
            .collect();
        Self { values }
    }

    pub fn clamp_to_upper(values: Vec<f64>, inst: &MiqcqpInstance) -> Self {
        Self::clamped(values, &inst.upper)
    }
}

fn require_normalized(inst: &MiqcqpInstance) -> Result<(), ConvexifyError> {
    if inst.lower.iter().any(|&l| l != 0.0) {
        Err(ConvexifyError::NotNormalized)
    } else {
        Ok(())
    }
}

fn is_psd(q: &SymSparseMatrix) -> (bool, f64) {
    if q.is_empty() {
        return (true, 0.0);
    }
    let support = q.support();
    let e = extreme_eigenvalues(&q.principal(&support), EIGEN_TOL);
    (e.min >= -PSD_TOL * q.norm_inf().max(1.0), e.min)
}

/// Exact model of the instance (convex flag set when every matrix is PSD).
pub fn build_original(inst: &MiqcqpInstance) -> ModelIR {
    let mut b = ModelBuilder::new(inst.name.clone());
    b.add_original_vars(inst);
    for c in &inst.quad_constraints {
        b.add_quad(c.q.clone(), dense_coeffs(&c.a), c.rhs);
    }
    b.add_original_linear(inst);
    b.set_objective(inst.objective.q.clone(), dense_coeffs(&inst.objective.a), inst.objective.constant);
    let convex = inst.matrices().all(|q| is_psd(q).0);
    b.finish(convex)
}

/// Shared core of the approximation builders: perturbed rows and the
/// linear surrogates of the removed squares.
struct Perturbed {
    builder: ModelBuilder,
    /// Per matrix: (perturbed matrix, linear part including surrogates).
    rows: Vec<(SymSparseMatrix, Vec<(usize, f64)>)>,
}

fn perturbed_parts(inst: &MiqcqpInstance, u_hat: &UHat, shifts: &Shifts) -> Result<Perturbed, ConvexifyError> {
    require_normalized(inst)?;
    if shifts.values.len() != inst.m1() + 1 || u_hat.values.len() != inst.n {
        return Err(ConvexifyError::Dimension("shifts or û do not match the instance".into()));
    }
    let mut b = ModelBuilder::new(inst.name.clone());
    b.add_original_vars(inst);
    let perturbed = shifts.perturbed(inst.n);
    // surrogate for x_i^2 as linear terms
    let mut surrogate: Vec<Vec<(usize, f64)>> = vec![Vec::new(); inst.n];
    for i in 0..inst.n {
        if !perturbed[i] {
            continue;
        }
        surrogate[i] = if !inst.integer[i] {
            vec![(i, u_hat.values[i].clamp(0.0, inst.upper[i].max(0.0) * 2.0))]
        } else if inst.upper[i] <= 1.0 {
            // binary or fixed at zero: x^2 = x
            vec![(i, 1.0)]
        } else {
            let e = b.binary_expand(i, inst.lower[i], inst.upper[i])?;
            let x_sq = b.build_h_linearization(&e);
            vec![(x_sq, 1.0)]
        };
    }
    let mut rows = Vec::new();
    for (k, q) in inst.matrices().enumerate() {
        let lam = shifts.values[k];
        let a = if k == 0 {
            &inst.objective.a
        } else {
            &inst.quad_constraints[k - 1].a
        };
        let mut lin = dense_coeffs(a);
        let q_new = if lam != 0.0 {
            let d: Vec<(usize, f64)> = shifts.supports[k].iter().map(|&i| (i, -lam)).collect();
            for &i in &shifts.supports[k] {
                for &(j, c) in &surrogate[i] {
                    lin.push((j, lam * c));
                }
            }
            q.add_diagonal(&d)
        } else {
            q.clone()
        };
        let (ok, min_eig) = is_psd(&q_new);
        if !ok {
            return Err(ConvexifyError::NotPsd { row: k, min_eig });
        }
        rows.push((q_new, lin));
    }
    Ok(Perturbed { builder: b, rows })
}

/// Convex approximation `Approx(û)` of a normalized instance.
///
/// Continuous surrogates use `û_i` clamped to `[0, 2u_i]`; callers that
/// need the stricter `[0, u_i]` clamp should build `û` with
/// [`UHat::clamp_to_upper`].
pub fn build_approx(inst: &MiqcqpInstance, u_hat: &UHat, shifts: &Shifts) -> Result<ModelIR, ConvexifyError> {
    let Perturbed { mut builder, rows } = perturbed_parts(inst, u_hat, shifts)?;
    let mut rows = rows.into_iter();
    let (q0, lin0) = rows.next().expect("objective row");
    for ((q, lin), c) in rows.zip(&inst.quad_constraints) {
        builder.add_quad(q, lin, c.rhs);
    }
    builder.add_original_linear(inst);
    builder.set_objective(q0, lin0, inst.objective.constant);
    Ok(builder.finish(true))
}

/// `Approx(u)`: a relaxation of the instance.
pub fn build_relaxation(inst: &MiqcqpInstance, shifts: &Shifts) -> Result<ModelIR, ConvexifyError> {
    build_approx(inst, &UHat::upper(inst), shifts)
}

/// Deficiency model: perturbed rows plus `δ_i >= û_i - x_i` over the
/// perturbed continuous variables, minimizing `sum δ_i`.
pub fn build_fpr1(inst: &MiqcqpInstance, u_hat: &UHat, shifts: &Shifts) -> Result<ModelIR, ConvexifyError> {
    let Perturbed { mut builder, rows } = perturbed_parts(inst, u_hat, shifts)?;
    for ((q, lin), c) in rows.into_iter().skip(1).zip(&inst.quad_constraints) {
        builder.add_quad(q, lin, c.rhs);
    }
    builder.add_original_linear(inst);
    let mut obj = Vec::new();
    for i in shifts.perturbed_continuous(inst) {
        let target = u_hat.values[i].clamp(0.0, 2.0 * inst.upper[i].max(0.0));
        let d = builder.add_var(
            format!("delta{i}"),
            0.0,
            target.max(0.0),
            VarKind::Continuous,
            VarOrigin::Deficiency { var: i, target },
        );
        builder.add_linear(vec![(d, 1.0), (i, 1.0)], Sense::Ge, target);
        obj.push((d, 1.0));
    }
    builder.set_objective(SymSparseMatrix::zeros(0), obj, 0.0);
    Ok(builder.finish(true))
}

/// Slack model: `x^T Q^k x + a_k x - s_k <= b_k`, minimizing `sum s_k`.
pub fn build_fpr2(inst: &MiqcqpInstance) -> ModelIR {
    let mut b = ModelBuilder::new(inst.name.clone());
    b.add_original_vars(inst);
    let mut obj = Vec::new();
    let rows: Vec<usize> = inst
        .quad_constraints
        .iter()
        .map(|c| b.add_quad(c.q.clone(), dense_coeffs(&c.a), c.rhs))
        .collect();
    for (k, row) in rows.into_iter().enumerate() {
        let s = b.add_var(format!("s{k}"), 0.0, f64::INFINITY, VarKind::Continuous, VarOrigin::RowSlack { row });
        b.quad_rows_mut()[row].coeffs.push((s, -1.0));
        obj.push((s, 1.0));
    }
    b.add_original_linear(inst);
    b.set_objective(SymSparseMatrix::zeros(0), obj, 0.0);
    let convex = inst.quad_constraints.iter().all(|c| is_psd(&c.q).0);
    b.finish(convex)
}

/// Minimizes `sum_{j in over} |x_j - x_ref_j|` over the region's feasible set.
pub fn build_l1_projection(region: &ModelIR, x_ref: &[f64], over: &[usize]) -> ModelIR {
    let mut b = ModelBuilder::from_model(region);
    let mut obj = Vec::new();
    for &j in over {
        let r = x_ref[j];
        let v = &region.variables[j];
        let span = (v.upper - r).abs().max((r - v.lower).abs());
        let d = b.add_var(
            format!("d{j}"),
            0.0,
            if span.is_finite() { span } else { f64::INFINITY },
            VarKind::Continuous,
            VarOrigin::L1Distance { var: j, reference: r },
        );
        b.add_linear(vec![(d, 1.0), (j, -1.0)], Sense::Ge, -r);
        b.add_linear(vec![(d, 1.0), (j, 1.0)], Sense::Ge, r);
        obj.push((d, 1.0));
    }
    b.set_objective(SymSparseMatrix::zeros(0), obj, 0.0);
    let convex = region.quad_constraints.iter().all(|c| is_psd(&c.q).0);
    b.finish(convex)
}

/// Hamming distance `Δ(x, x̄)` over the variables in `b_vars`.
pub fn delta(b_vars: &[usize], x_ref: &[f64], x: &[f64]) -> f64 {
    b_vars
        .iter()
        .zip(x_ref)
        .map(|(&j, &r)| if r > 0.5 { 1.0 - x[j] } else { x[j] })
        .sum()
}

/// Reverse distance `Δ_r = |B| - Δ`.
pub fn delta_r(b_vars: &[usize], x_ref: &[f64], x: &[f64]) -> f64 {
    b_vars
        .iter()
        .zip(x_ref)
        .map(|(&j, &r)| if r > 0.5 { x[j] } else { 1.0 - x[j] })
        .sum()
}

/// `Δ(x, x̄) = |S̄| + sum c_j x_j`: returns `(c, |S̄|)`.
fn delta_terms(b_vars: &[usize], x_ref: &[f64]) -> (Vec<(usize, f64)>, f64) {
    let mut ones = 0.0;
    let coeffs = b_vars
        .iter()
        .zip(x_ref)
        .map(|(&j, &r)| {
            if r > 0.5 {
                ones += 1.0;
                (j, -1.0)
            } else {
                (j, 1.0)
            }
        })
        .collect();
    (coeffs, ones)
}

/// Appends `k_lo <= Δ(x, x̄) <= k_hi`. A side is omitted when `k_lo = 0` or
/// `k_hi >= |B|`.
pub fn add_lbc(model: &ModelIR, b_vars: &[usize], x_ref: &[f64], k_lo: usize, k_hi: usize) -> Result<ModelIR, ConvexifyError> {
    if b_vars.is_empty() {
        return Err(ConvexifyError::NoBinaries);
    }
    if b_vars.len() != x_ref.len() {
        return Err(ConvexifyError::Dimension("reference length differs from |B|".into()));
    }
    let (c, ones) = delta_terms(b_vars, x_ref);
    let mut b = ModelBuilder::from_model(model);
    if k_hi < b_vars.len() {
        b.add_linear(c.clone(), Sense::Le, k_hi as f64 - ones);
    }
    if k_lo > 0 {
        b.add_linear(c, Sense::Ge, k_lo as f64 - ones);
    }
    Ok(b.finish(model.convex))
}

/// Appends `Δ_r(x, x̄) <= k`.
pub fn add_rlbc(model: &ModelIR, b_vars: &[usize], x_ref: &[f64], k: usize) -> Result<ModelIR, ConvexifyError> {
    if b_vars.is_empty() {
        return Err(ConvexifyError::NoBinaries);
    }
    if b_vars.len() != x_ref.len() {
        return Err(ConvexifyError::Dimension("reference length differs from |B|".into()));
    }
    let (c, ones) = delta_terms(b_vars, x_ref);
    // |B| - Δ <= k  <=>  sum c x >= |B| - k - |S̄|
    let mut b = ModelBuilder::from_model(model);
    b.add_linear(c, Sense::Ge, b_vars.len() as f64 - k as f64 - ones);
    Ok(b.finish(model.convex))
}

/// Original model extended with bit expansions of every general integer,
/// together with the local-branching variable set `B` (original binaries
/// followed by expansion bits).
pub fn build_branching_model(inst: &MiqcqpInstance) -> (ModelIR, Vec<usize>) {
    let base = build_original(inst);
    let mut b = ModelBuilder::from_model(&base);
    let mut bvars: Vec<usize> = inst.binary_indices();
    for j in inst.integer_indices() {
        if !inst.is_binary(j) && inst.upper[j] > inst.lower[j] {
            let e = b
                .binary_expand(j, inst.lower[j], inst.upper[j])
                .expect("non-fixed integer expands");
            bvars.extend(e.bits);
        }
    }
    (b.finish(base.convex), bvars)
}

#[cfg(test)]
mod tests;
