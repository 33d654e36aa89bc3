//! Conversion of convex(ified) continuous models to conic form and node
//! relaxation solves through Clarabel.
//!
//! Every quadratic matrix is shifted by a diagonal `d` on its support so
//! that `Q - diag(d)` is positive semidefinite (`d = 0` for convex
//! matrices). Over a box `l <= x <= u` the removed term is replaced by its
//! secant underestimator `d_i x_i^2 >= d_i((l_i + u_i) x_i - l_i u_i)`,
//! which only changes linear coefficients, so one template serves every
//! node.

use crate::convexify::{ModelIR, Sense};
use crate::instance::SymSparseMatrix;
use crate::spectral::{extreme_eigenvalues, CONVEX_TOL, EIGEN_TOL};
use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SecondOrderConeT, SolverStatus,
    SupportedConeT, ZeroConeT,
};
use nalgebra::SymmetricEigen;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("matrix {which} is not positive semidefinite (min eigenvalue {min_eig})")]
    NotConvex { which: String, min_eig: f64 },
    #[error("variable {0} appears in a shifted quadratic term but has an infinite bound")]
    UnboundedShift(usize),
}

/// Result of one relaxation solve.
#[derive(Debug, Clone, PartialEq)]
pub enum RelaxOutcome {
    Solved {
        x: Vec<f64>,
        /// Relaxed objective at `x`.
        objective: f64,
        /// Valid lower bound on the relaxed optimum.
        bound: f64,
    },
    Infeasible,
    TimeLimit,
    Failed(String),
}

#[derive(Debug, Clone)]
struct ConeRow {
    /// Rows of a factor `F` with `Q - diag(d) = F^T F`.
    factor: Vec<Vec<(usize, f64)>>,
    lin: Vec<(usize, f64)>,
    rhs: f64,
    shift: Vec<(usize, f64)>,
}

/// Per-model conic data; bounds are supplied per solve.
#[derive(Debug, Clone)]
pub struct ConicTemplate {
    n: usize,
    p_triplets: Vec<(usize, usize, f64)>,
    obj_lin: Vec<f64>,
    obj_constant: f64,
    obj_shift: Vec<(usize, f64)>,
    linear: Vec<(Vec<(usize, f64)>, Sense, f64)>,
    rows: Vec<ConeRow>,
}

fn scale_of(m: &SymSparseMatrix) -> f64 {
    m.norm_inf().max(1.0)
}

/// Diagonal shift making `m` PSD on its support, or `None` when `m` is
/// already convex.
fn needed_shift(m: &SymSparseMatrix) -> Option<f64> {
    if m.is_empty() {
        return None;
    }
    let scale = scale_of(m);
    let est = extreme_eigenvalues(m, EIGEN_TOL);
    (est.min < -CONVEX_TOL * scale).then(|| est.min - 1e-8 * scale)
}

fn factorize(m: &SymSparseMatrix, which: &str) -> Result<Vec<Vec<(usize, f64)>>, ConicError> {
    let support = m.support();
    if support.is_empty() {
        return Ok(Vec::new());
    }
    let dense = m.principal_dense(&support);
    let scale = scale_of(m);
    let eig = SymmetricEigen::new(dense);
    let mut rows = Vec::new();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < -1e-6 * scale {
            return Err(ConicError::NotConvex { which: which.to_string(), min_eig: lam });
        }
        if lam <= 1e-12 * scale {
            continue;
        }
        let s = lam.sqrt();
        let row: Vec<(usize, f64)> = support
            .iter()
            .enumerate()
            .map(|(i, &j)| (j, s * eig.eigenvectors[(i, k)]))
            .filter(|&(_, v)| v != 0.0)
            .collect();
        rows.push(row);
    }
    Ok(rows)
}

impl ConicTemplate {
    /// Template for a convex model; fails when a matrix is not PSD.
    pub fn convex(model: &ModelIR) -> Result<Self, ConicError> {
        Self::build(model, false)
    }

    /// Template whose nonconvex matrices are replaced by diagonal-shift
    /// underestimators, valid for any model with finite bounds on the
    /// supports of nonconvex matrices.
    pub fn underestimating(model: &ModelIR) -> Result<Self, ConicError> {
        Self::build(model, true)
    }

    fn build(model: &ModelIR, shift_nonconvex: bool) -> Result<Self, ConicError> {
        let n = model.n_vars();
        let lower = model.lower();
        let upper = model.upper();
        let shift_for = |m: &SymSparseMatrix, which: &str| -> Result<(SymSparseMatrix, Vec<(usize, f64)>), ConicError> {
            match needed_shift(m) {
                None => Ok((m.clone(), Vec::new())),
                Some(d) if shift_nonconvex => {
                    let support = m.support();
                    if let Some(&j) = support.iter().find(|&&j| !(lower[j].is_finite() && upper[j].is_finite())) {
                        return Err(ConicError::UnboundedShift(j));
                    }
                    let shift: Vec<(usize, f64)> = support.iter().map(|&j| (j, d)).collect();
                    let neg: Vec<(usize, f64)> = shift.iter().map(|&(j, v)| (j, -v)).collect();
                    Ok((m.add_diagonal(&neg), shift))
                }
                Some(d) => Err(ConicError::NotConvex { which: which.to_string(), min_eig: d }),
            }
        };

        let (q0, obj_shift) = shift_for(&model.objective.q, "objective")?;
        let p_triplets = q0.entries().iter().map(|&(r, c, v)| (r, c, 2.0 * v)).collect();
        let mut obj_lin = vec![0.0; n];
        for &(j, v) in &model.objective.linear {
            obj_lin[j] += v;
        }
        let linear = model
            .linear_constraints
            .iter()
            .map(|c| (c.coeffs.clone(), c.sense, c.rhs))
            .collect();
        let mut rows = Vec::new();
        for (k, r) in model.quad_constraints.iter().enumerate() {
            let which = format!("row {k}");
            let (q, shift) = shift_for(&r.q, &which)?;
            rows.push(ConeRow {
                factor: factorize(&q, &which)?,
                lin: r.coeffs.clone(),
                rhs: r.rhs,
                shift,
            });
        }
        Ok(Self {
            n,
            p_triplets,
            obj_lin,
            obj_constant: model.objective.constant,
            obj_shift,
            linear,
            rows,
        })
    }

    /// True when no matrix was shifted, i.e. the relaxation is the model's
    /// own continuous relaxation.
    pub fn is_exact(&self) -> bool {
        self.obj_shift.is_empty() && self.rows.iter().all(|r| r.shift.is_empty())
    }

    /// Value of the (under)estimated objective at `x` for the given box.
    pub fn relaxed_objective(&self, x: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
        let (q, c) = self.objective_terms(lo, hi);
        let quad: f64 = self
            .p_triplets
            .iter()
            .map(|&(r, cc, v)| if r == cc { 0.5 * v * x[r] * x[r] } else { v * x[r] * x[cc] })
            .sum();
        quad + q.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + c
    }

    fn objective_terms(&self, lo: &[f64], hi: &[f64]) -> (Vec<f64>, f64) {
        let mut q = self.obj_lin.clone();
        let mut c = self.obj_constant;
        for &(j, d) in &self.obj_shift {
            q[j] += d * (lo[j] + hi[j]);
            c -= d * lo[j] * hi[j];
        }
        (q, c)
    }

    /// Solves the relaxation over the box `[lo, hi]`.
    pub fn solve(&self, lo: &[f64], hi: &[f64], time_limit_s: f64) -> RelaxOutcome {
        let n = self.n;
        if (0..n).any(|j| lo[j] > hi[j] + 1e-9) {
            return RelaxOutcome::Infeasible;
        }
        let (q, constant) = self.objective_terms(lo, hi);

        let mut ai = Vec::new();
        let mut aj = Vec::new();
        let mut av = Vec::new();
        let mut b = Vec::new();
        let mut push_row = |coeffs: &mut dyn Iterator<Item = (usize, f64)>, rhs: f64, b: &mut Vec<f64>| {
            let r = b.len();
            for (j, v) in coeffs {
                ai.push(r);
                aj.push(j);
                av.push(v);
            }
            b.push(rhs);
        };

        // zero cone: equalities and fixed variables
        for (coeffs, sense, rhs) in &self.linear {
            if *sense == Sense::Eq {
                push_row(&mut coeffs.iter().copied(), *rhs, &mut b);
            }
        }
        let fixed: Vec<usize> = (0..n).filter(|&j| hi[j] - lo[j] <= 1e-12).collect();
        for &j in &fixed {
            push_row(&mut std::iter::once((j, 1.0)), 0.5 * (lo[j] + hi[j]), &mut b);
        }
        let n_zero = b.len();

        // nonnegative cone: inequalities and finite bounds
        for (coeffs, sense, rhs) in &self.linear {
            match sense {
                Sense::Le => push_row(&mut coeffs.iter().copied(), *rhs, &mut b),
                Sense::Ge => push_row(&mut coeffs.iter().map(|&(j, v)| (j, -v)), -*rhs, &mut b),
                Sense::Eq => {}
            }
        }
        for j in 0..n {
            if hi[j] - lo[j] <= 1e-12 {
                continue;
            }
            if hi[j].is_finite() {
                push_row(&mut std::iter::once((j, 1.0)), hi[j], &mut b);
            }
            if lo[j].is_finite() {
                push_row(&mut std::iter::once((j, -1.0)), -lo[j], &mut b);
            }
        }
        // rows with a zero factor are linear
        let mut socs = Vec::new();
        for row in &self.rows {
            let mut rhs = row.rhs;
            let mut coeffs = row.lin.clone();
            for &(j, d) in &row.shift {
                coeffs.push((j, d * (lo[j] + hi[j])));
                rhs += d * lo[j] * hi[j];
            }
            if row.factor.is_empty() {
                push_row(&mut coeffs.iter().copied(), rhs, &mut b);
            } else {
                socs.push((row, coeffs, rhs));
            }
        }
        let n_nonneg = b.len() - n_zero;

        // second-order cones: ||F x||^2 <= t with t = rhs - a^T x written as
        // ((1 + t)/2, F x, (1 - t)/2) in the Lorentz cone
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        if n_zero > 0 {
            cones.push(ZeroConeT(n_zero));
        }
        if n_nonneg > 0 {
            cones.push(NonnegativeConeT(n_nonneg));
        }
        for (row, coeffs, rhs) in socs {
            push_row(&mut coeffs.iter().map(|&(j, v)| (j, 0.5 * v)), 0.5 * (1.0 + rhs), &mut b);
            for f in &row.factor {
                push_row(&mut f.iter().map(|&(j, v)| (j, -v)), 0.0, &mut b);
            }
            push_row(&mut coeffs.iter().map(|&(j, v)| (j, -0.5 * v)), 0.5 * (1.0 - rhs), &mut b);
            cones.push(SecondOrderConeT(row.factor.len() + 2));
        }

        let m = b.len();
        let a = CscMatrix::new_from_triplets(m, n, ai, aj, av);
        let (pi, pj, pv): (Vec<usize>, Vec<usize>, Vec<f64>) = {
            let mut pi = Vec::new();
            let mut pj = Vec::new();
            let mut pv = Vec::new();
            for &(r, c, v) in &self.p_triplets {
                pi.push(r);
                pj.push(c);
                pv.push(v);
            }
            (pi, pj, pv)
        };
        let p = CscMatrix::new_from_triplets(n, n, pi, pj, pv);
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .time_limit(time_limit_s.max(1e-3))
            .max_iter(200)
            .presolve_enable(false)
            .build()
            .expect("valid settings");
        let mut solver = match DefaultSolver::new(&p, &q, &a, &b, &cones, settings) {
            Ok(s) => s,
            Err(e) => return RelaxOutcome::Failed(e.to_string()),
        };
        solver.solve();
        let sol = &solver.solution;
        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                let mut x = sol.x.clone();
                for j in 0..n {
                    x[j] = x[j].clamp(lo[j], hi[j]);
                }
                let objective = self.relaxed_objective(&x, lo, hi);
                let dual = sol.obj_val_dual + constant;
                let primal = sol.obj_val + constant;
                let slack = 1e-6 * (1.0 + primal.abs());
                let bound = if dual.is_finite() { dual.min(primal) } else { primal } - slack;
                RelaxOutcome::Solved { x, objective, bound }
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => RelaxOutcome::Infeasible,
            SolverStatus::MaxTime => RelaxOutcome::TimeLimit,
            other => RelaxOutcome::Failed(format!("{other:?}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convexify::build_original;
    use crate::instance::{LinearRow, MiqcqpInstance, QuadConstraint};

    fn solved(o: RelaxOutcome) -> (Vec<f64>, f64) {
        match o {
            RelaxOutcome::Solved { x, objective, .. } => (x, objective),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn boundary_optimum() {
        let mut inst = MiqcqpInstance::new("b", 1);
        inst.lower = vec![1.0];
        inst.upper = vec![2.0];
        inst.objective.q = SymSparseMatrix::diagonal(&[1.0]);
        let m = build_original(&inst);
        let t = ConicTemplate::convex(&m).unwrap();
        let (x, f) = solved(t.solve(&m.lower(), &m.upper(), 5.0));
        assert!((x[0] - 1.0).abs() < 1e-6);
        assert!((f - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quadratic_row_as_cone() {
        // min -x - y s.t. x^2 + y^2 <= 2
        let mut inst = MiqcqpInstance::new("q", 2);
        inst.lower = vec![-3.0, -3.0];
        inst.upper = vec![3.0, 3.0];
        inst.objective.a = vec![-1.0, -1.0];
        inst.quad_constraints.push(QuadConstraint {
            q: SymSparseMatrix::identity(2),
            a: vec![0.0, 0.0],
            rhs: 2.0,
        });
        let m = build_original(&inst);
        let t = ConicTemplate::convex(&m).unwrap();
        let (x, f) = solved(t.solve(&m.lower(), &m.upper(), 5.0));
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] - 1.0).abs() < 1e-5, "{x:?}");
        assert!((f + 2.0).abs() < 1e-5);
    }

    #[test]
    fn infeasible_linear_rows() {
        let mut inst = MiqcqpInstance::new("i", 2);
        inst.linear.push(LinearRow { coeffs: vec![(0, -1.0), (1, -1.0)], rhs: -3.0 });
        let m = build_original(&inst);
        let t = ConicTemplate::convex(&m).unwrap();
        assert_eq!(t.solve(&m.lower(), &m.upper(), 5.0), RelaxOutcome::Infeasible);
    }

    #[test]
    fn nonconvex_is_rejected_or_underestimated() {
        let mut inst = MiqcqpInstance::new("n", 2);
        inst.lower = vec![-1.0, -1.0];
        inst.upper = vec![1.0, 2.0];
        inst.objective.q = SymSparseMatrix::from_triplets(2, [(0, 0, -1.0), (0, 1, 0.5), (1, 1, 0.25)]);
        inst.objective.a = vec![0.2, -0.3];
        let m = build_original(&inst);
        assert!(matches!(ConicTemplate::convex(&m), Err(ConicError::NotConvex { .. })));
        let t = ConicTemplate::underestimating(&m).unwrap();
        assert!(!t.is_exact());
        let (lo, hi) = (m.lower(), m.upper());
        let RelaxOutcome::Solved { bound, .. } = t.solve(&lo, &hi, 5.0) else { panic!() };
        // the bound underestimates the objective on a grid
        for i in 0..=20 {
            for k in 0..=30 {
                let x = [-1.0 + 0.1 * i as f64, -1.0 + 0.1 * k as f64];
                assert!(m.objective.eval(&x) >= bound - 1e-9);
                assert!(m.objective.eval(&x) >= t.relaxed_objective(&x, &lo, &hi) - 1e-9);
            }
        }
    }
}
