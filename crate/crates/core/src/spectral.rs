//! Extreme eigenvalues and diagonal perturbation shifts.
//!
//! A shift `λ <= 0` makes `Q - λ I` positive semidefinite. The classic rule
//! takes `min{0, λ_min}`; the safe rule takes `min{2 λ̲_β, λ_min} - 1` where
//! `λ̲_β` is the smallest eigenvalue of the block of `Q` on the continuous
//! variables, which keeps fixed-point iterates on `û` from drifting.

use crate::instance::{MiqcqpInstance, SymSparseMatrix};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// Matrices up to this dimension are decomposed densely.
pub const DENSE_LIMIT: usize = 64;
/// Relative tolerance used for eigenvalue estimates.
pub const EIGEN_TOL: f64 = 1e-6;
/// A matrix whose smallest eigenvalue is above `-CONVEX_TOL * scale` is
/// treated as convex and receives no shift.
pub const CONVEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EigenMethod {
    Dense,
    Lanczos,
    /// Lanczos did not converge; values are Gershgorin disc bounds.
    Gershgorin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenEstimate {
    pub min: f64,
    pub max: f64,
    pub method: EigenMethod,
}

impl EigenEstimate {
    pub fn is_fallback(&self) -> bool {
        self.method == EigenMethod::Gershgorin
    }
}

/// Smallest and largest eigenvalue of a symmetric matrix.
///
/// Dense decomposition for small matrices, Lanczos with full
/// reorthogonalization otherwise. If Lanczos fails to converge within
/// `10·dim` steps, the Gershgorin discs are returned instead; these never
/// over-estimate `λ_min`.
pub fn extreme_eigenvalues(m: &SymSparseMatrix, tol: f64) -> EigenEstimate {
    let n = m.dim();
    if n == 0 || m.is_empty() {
        return EigenEstimate {
            min: 0.0,
            max: 0.0,
            method: EigenMethod::Dense,
        };
    }
    if n <= DENSE_LIMIT {
        return dense_extremes(&m.to_dense());
    }
    lanczos_extremes(m, tol).unwrap_or_else(|| {
        log::warn!("Lanczos did not converge for dim {n}; using Gershgorin bounds");
        gershgorin(m)
    })
}

fn dense_extremes(d: &DMatrix<f64>) -> EigenEstimate {
    if d.nrows() == 0 {
        return EigenEstimate {
            min: 0.0,
            max: 0.0,
            method: EigenMethod::Dense,
        };
    }
    let eig = SymmetricEigen::new(d.clone());
    EigenEstimate {
        min: eig.eigenvalues.min(),
        max: eig.eigenvalues.max(),
        method: EigenMethod::Dense,
    }
}

pub fn gershgorin(m: &SymSparseMatrix) -> EigenEstimate {
    let n = m.dim();
    let mut diag = vec![0.0; n];
    let mut radius = vec![0.0; n];
    for &(r, c, v) in m.entries() {
        if r == c {
            diag[r] = v;
        } else {
            radius[r] += v.abs();
            radius[c] += v.abs();
        }
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        lo = lo.min(diag[i] - radius[i]);
        hi = hi.max(diag[i] + radius[i]);
    }
    EigenEstimate {
        min: lo,
        max: hi,
        method: EigenMethod::Gershgorin,
    }
}

fn lanczos_extremes(m: &SymSparseMatrix, tol: f64) -> Option<EigenEstimate> {
    let n = m.dim();
    let scale = m.norm_inf().max(1.0);
    let cap = 10 * n;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let random_unit = |rng: &mut ChaCha8Rng, basis: &[DVector<f64>]| -> Option<DVector<f64>> {
        for _ in 0..5 {
            let mut v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            for b in basis {
                let p = b.dot(&v);
                v.axpy(-p, b, 1.0);
            }
            let nv = v.norm();
            if nv > 1e-10 {
                return Some(v / nv);
            }
        }
        None
    };

    let mut q = random_unit(&mut rng, &basis)?;
    let mut w = vec![0.0; n];
    for step in 0..cap.min(n) {
        m.mul_vec_into(q.as_slice(), &mut w);
        let mut wv = DVector::from_column_slice(&w);
        let a = q.dot(&wv);
        wv.axpy(-a, &q, 1.0);
        if let Some(prev) = basis.last() {
            wv.axpy(-betas.last().copied().unwrap_or(0.0), prev, 1.0);
        }
        basis.push(q.clone());
        alphas.push(a);
        // full reorthogonalization, twice for stability
        for _ in 0..2 {
            for b in &basis {
                let p = b.dot(&wv);
                wv.axpy(-p, b, 1.0);
            }
        }
        let beta = wv.norm();
        let k = alphas.len();
        let check = k == n || k % 10 == 0 || beta <= 1e-12 * scale;
        if check {
            let t = tridiagonal(&alphas, &betas);
            let eig = SymmetricEigen::new(t);
            let (imin, imax) = argminmax(eig.eigenvalues.as_slice());
            let res_min = (beta * eig.eigenvectors[(k - 1, imin)]).abs();
            let res_max = (beta * eig.eigenvectors[(k - 1, imax)]).abs();
            if k == n || (res_min <= tol * scale && res_max <= tol * scale) {
                return Some(EigenEstimate {
                    // the residual bounds the distance to a true eigenvalue
                    min: eig.eigenvalues[imin] - res_min,
                    max: eig.eigenvalues[imax] + res_max,
                    method: EigenMethod::Lanczos,
                });
            }
        }
        if step + 1 == n {
            break;
        }
        if beta <= 1e-12 * scale {
            // invariant subspace: restart in the orthogonal complement
            betas.push(0.0);
            q = random_unit(&mut rng, &basis)?;
        } else {
            betas.push(beta);
            q = wv / beta;
        }
    }
    None
}

fn tridiagonal(alphas: &[f64], betas: &[f64]) -> DMatrix<f64> {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    t
}

fn argminmax(v: &[f64]) -> (usize, usize) {
    let mut imin = 0;
    let mut imax = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[imin] {
            imin = i;
        }
        if x > v[imax] {
            imax = i;
        }
    }
    (imin, imax)
}

/// Extreme eigenvalues of the principal submatrix on `idx`.
pub fn principal_extremes(m: &SymSparseMatrix, idx: &[usize]) -> EigenEstimate {
    if idx.len() <= DENSE_LIMIT {
        dense_extremes(&m.principal_dense(idx))
    } else {
        extreme_eigenvalues(&m.principal(idx), EIGEN_TOL)
    }
}

/// `min{0, λ_min}`.
pub fn classic_shift(m: &SymSparseMatrix) -> f64 {
    extreme_eigenvalues(m, EIGEN_TOL).min.min(0.0)
}

/// `min{2 λ̲_β, λ_min} - 1`, or the classic shift when `beta` is empty.
pub fn safe_shift(m: &SymSparseMatrix, beta: &[usize]) -> f64 {
    if beta.is_empty() {
        return classic_shift(m);
    }
    let lmin = extreme_eigenvalues(m, EIGEN_TOL).min;
    let lb = principal_extremes(m, beta).min;
    safe_formula(lmin, lb)
}

pub fn safe_formula(lambda_min: f64, lambda_beta_min: f64) -> f64 {
    (2.0 * lambda_beta_min).min(lambda_min) - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftRule {
    Classic,
    #[default]
    Safe,
}

impl FromStr for ShiftRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "classic" => Ok(ShiftRule::Classic),
            "safe" => Ok(ShiftRule::Safe),
            other => Err(format!("unknown shift rule '{other}' (expected classic or safe)")),
        }
    }
}

/// Spectral summary of one `Q^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralInfo {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_classic: f64,
    /// Extremes of the continuous block; `None` when the block is empty.
    pub lambda_beta_min: Option<f64>,
    pub lambda_beta_max: Option<f64>,
    pub lambda_safe: f64,
    pub method: EigenMethod,
}

impl SpectralInfo {
    pub fn compute(m: &SymSparseMatrix, beta: &[usize]) -> Self {
        let full = extreme_eigenvalues(m, EIGEN_TOL);
        let (bmin, bmax) = if beta.is_empty() {
            (None, None)
        } else {
            let b = principal_extremes(m, beta);
            (Some(b.min), Some(b.max))
        };
        let classic = full.min.min(0.0);
        let safe = match bmin {
            Some(lb) => safe_formula(full.min, lb),
            None => classic,
        };
        Self {
            lambda_min: full.min,
            lambda_max: full.max,
            lambda_classic: classic,
            lambda_beta_min: bmin,
            lambda_beta_max: bmax,
            lambda_safe: safe,
            method: full.method,
        }
    }

    pub fn is_convex(&self, scale: f64) -> bool {
        self.lambda_min >= -CONVEX_TOL * scale.max(1.0)
    }

    /// Shift actually applied: zero for convex matrices, else by rule.
    pub fn shift(&self, rule: ShiftRule, scale: f64) -> f64 {
        if self.is_convex(scale) {
            0.0
        } else {
            match rule {
                ShiftRule::Classic => self.lambda_classic,
                ShiftRule::Safe => self.lambda_safe,
            }
        }
    }
}

/// Quantities from the deviation and norm bounds for a box-free MIQP
/// `min x^T Q x + a^T x` over binaries `α` and nonnegative continuous `β`,
/// evaluated at an optimizer `x*` of its perturbed problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub shift: f64,
    pub lambda_beta_min: f64,
    pub lambda_beta_max: f64,
    /// `‖(2 Q_γ^T x_α* + a_β)_{β'} / λ‖`.
    pub omega: f64,
    /// `max_{x_α} ‖2 Q_γ^T x_α + a_β‖`.
    pub theta_bar: f64,
    pub theta_exact: bool,
    pub norm_x_beta: f64,
    pub deviation: f64,
    pub deviation_bound: Option<f64>,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub deviation_holds: Option<bool>,
    pub lower_holds: Option<bool>,
    pub upper_holds: Option<bool>,
    /// `λ = λ̲_β`: the continuous block is not strictly convex.
    pub degenerate: bool,
}

impl BoundReport {
    /// Every defined inequality holds.
    pub fn all_hold(&self) -> bool {
        [self.deviation_holds, self.lower_holds, self.upper_holds]
            .iter()
            .all(|h| h.unwrap_or(true))
    }
}

/// Coefficient of `‖û_β‖` in the deviation bound for a given shift.
pub fn deviation_coefficient(lambda_beta_min: f64, lambda_beta_max: f64, shift: f64) -> f64 {
    (2.0 * lambda_beta_max - shift) / (2.0 * (lambda_beta_min - shift))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Evaluates the deviation and two-sided norm bounds at `x_star`.
///
/// `inst` supplies `Q^0`, `a`, and the split into binaries (`α`, its
/// integer variables) and continuous variables (`β`). `u_hat` is indexed
/// like `β`. Inequalities that are undefined for the given shift are
/// reported as `None`.
pub fn verify_bounds(inst: &MiqcqpInstance, u_hat: &[f64], x_star: &[f64], shift: f64) -> BoundReport {
    let alpha = inst.integer_indices();
    let beta = inst.continuous_indices();
    assert_eq!(u_hat.len(), beta.len(), "û must cover the continuous block");
    let q = &inst.objective.q;
    let a = &inst.objective.a;
    let slack = |b: f64| 1e-9 * (1.0 + b.abs());

    if beta.is_empty() {
        return BoundReport {
            shift,
            lambda_beta_min: 0.0,
            lambda_beta_max: 0.0,
            omega: 0.0,
            theta_bar: 0.0,
            theta_exact: true,
            norm_x_beta: 0.0,
            deviation: 0.0,
            deviation_bound: None,
            lower_bound: None,
            upper_bound: None,
            deviation_holds: None,
            lower_holds: None,
            upper_holds: None,
            degenerate: false,
        };
    }

    let qb = principal_extremes(q, &beta);
    let (lb, ub) = (qb.min, qb.max);

    // g(x_α) = 2 Q_γ^T x_α + a_β
    let mut pos_beta = vec![usize::MAX; inst.n];
    for (k, &j) in beta.iter().enumerate() {
        pos_beta[j] = k;
    }
    let gamma_rows: Vec<Vec<(usize, f64)>> = alpha
        .iter()
        .map(|&i| {
            q.column(i)
                .into_iter()
                .filter(|&(j, _)| pos_beta[j] != usize::MAX)
                .map(|(j, v)| (pos_beta[j], 2.0 * v))
                .collect()
        })
        .collect();
    let g_of = |xa: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let mut g: Vec<f64> = beta.iter().map(|&j| a[j]).collect();
        for (r, row) in gamma_rows.iter().enumerate() {
            let xv = xa(r);
            if xv != 0.0 {
                for &(k, v) in row {
                    g[k] += v * xv;
                }
            }
        }
        g
    };

    let (theta_bar, theta_exact) = if alpha.len() <= 20 {
        let mut best: f64 = 0.0;
        for mask in 0u64..(1u64 << alpha.len()) {
            let g = g_of(&|r| ((mask >> r) & 1) as f64);
            best = best.max(norm(&g));
        }
        (best, true)
    } else {
        let a_beta: Vec<f64> = beta.iter().map(|&j| a[j]).collect();
        let rows: f64 = gamma_rows
            .iter()
            .map(|row| row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt())
            .sum();
        (rows + norm(&a_beta), false)
    };

    let g_star = g_of(&|r| x_star[alpha[r]]);
    let x_beta: Vec<f64> = beta.iter().map(|&j| x_star[j]).collect();
    let beta_prime: Vec<usize> = (0..beta.len()).filter(|&k| x_beta[k] > 1e-12).collect();
    let norm_x_beta = norm(&x_beta);
    let deviation = norm(&x_beta.iter().zip(u_hat).map(|(x, u)| x - u).collect::<Vec<_>>());
    let norm_u = norm(u_hat);

    let degenerate = (shift - lb).abs() <= 1e-12 * (1.0 + lb.abs());
    let deviation_bound = (shift < lb && !degenerate && shift <= 2.0 * lb)
        .then(|| deviation_coefficient(lb, ub, shift) * norm_u + theta_bar / (2.0 * (lb - shift)));

    let (omega, lower_bound, upper_bound) = if !beta_prime.is_empty() && shift < 0.0 {
        let omega = norm(&beta_prime.iter().map(|&k| g_star[k] / shift).collect::<Vec<_>>());
        let u_prime = norm(&beta_prime.iter().map(|&k| u_hat[k]).collect::<Vec<_>>());
        let lower = (shift < ub).then(|| shift / (2.0 * (shift - ub)) * (u_prime - omega).abs());
        let upper = (shift < lb && !degenerate).then(|| shift / (2.0 * (shift - lb)) * (u_prime + omega));
        (omega, lower, upper)
    } else {
        (0.0, None, None)
    };

    BoundReport {
        shift,
        lambda_beta_min: lb,
        lambda_beta_max: ub,
        omega,
        theta_bar,
        theta_exact,
        norm_x_beta,
        deviation,
        deviation_holds: deviation_bound.map(|b| deviation <= b + slack(b)),
        lower_holds: lower_bound.map(|b| b <= norm_x_beta + slack(b)),
        upper_holds: upper_bound.map(|b| norm_x_beta <= b + slack(b)),
        deviation_bound,
        lower_bound,
        upper_bound,
        degenerate,
    }
}
