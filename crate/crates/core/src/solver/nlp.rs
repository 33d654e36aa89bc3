//! Local solver for continuous (integer-fixed) subproblems: a PHR
//! augmented Lagrangian whose inner problems are solved by spectral
//! projected gradient on the variable box.

use super::CancelToken;
use crate::convexify::{ModelIR, Sense};
use crate::instance::SymSparseMatrix;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct NlpOptions {
    pub max_outer: usize,
    pub max_inner: usize,
    /// Row violation accepted as feasible.
    pub feas_tol: f64,
    /// Target projected-gradient residual.
    pub opt_tol: f64,
}

impl Default for NlpOptions {
    fn default() -> Self {
        Self {
            max_outer: 40,
            max_inner: 400,
            feas_tol: 1e-7,
            opt_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlpOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    /// Projected gradient of the Lagrangian at `x`.
    pub stationarity: f64,
    pub feasible: bool,
}

struct Row {
    q: Option<SymSparseMatrix>,
    lin: Vec<(usize, f64)>,
    rhs: f64,
}

impl Row {
    fn value(&self, x: &[f64]) -> f64 {
        let quad = self.q.as_ref().map_or(0.0, |q| q.quad_form(x));
        quad + self.lin.iter().map(|&(j, v)| v * x[j]).sum::<f64>() - self.rhs
    }

    fn add_gradient(&self, x: &[f64], w: f64, g: &mut [f64]) {
        if w == 0.0 {
            return;
        }
        if let Some(q) = &self.q {
            for &(r, c, v) in q.entries() {
                g[r] += 2.0 * w * v * x[c];
                if r != c {
                    g[c] += 2.0 * w * v * x[r];
                }
            }
        }
        for &(j, v) in &self.lin {
            g[j] += w * v;
        }
    }
}

/// Smooth form of a model: rows are `value(x) <= 0` or `== 0`.
pub(crate) struct Compiled {
    n: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    obj: Row,
    obj_constant: f64,
    ineq: Vec<Row>,
    eq: Vec<Row>,
}

impl Compiled {
    pub(crate) fn new(m: &ModelIR) -> Self {
        let n = m.n_vars();
        let resize = |q: &SymSparseMatrix| (!q.is_empty()).then(|| q.resized(n));
        let mut ineq = Vec::new();
        let mut eq = Vec::new();
        for c in &m.linear_constraints {
            match c.sense {
                Sense::Le => ineq.push(Row { q: None, lin: c.coeffs.clone(), rhs: c.rhs }),
                Sense::Ge => ineq.push(Row {
                    q: None,
                    lin: c.coeffs.iter().map(|&(j, v)| (j, -v)).collect(),
                    rhs: -c.rhs,
                }),
                Sense::Eq => eq.push(Row { q: None, lin: c.coeffs.clone(), rhs: c.rhs }),
            }
        }
        for r in &m.quad_constraints {
            ineq.push(Row { q: resize(&r.q), lin: r.coeffs.clone(), rhs: r.rhs });
        }
        Self {
            n,
            lo: m.lower(),
            hi: m.upper(),
            obj: Row { q: resize(&m.objective.q), lin: m.objective.linear.clone(), rhs: 0.0 },
            obj_constant: m.objective.constant,
            ineq,
            eq,
        }
    }

    fn project(&self, x: &mut [f64]) {
        for j in 0..self.n {
            x[j] = x[j].clamp(self.lo[j], self.hi[j]);
        }
    }

    pub(crate) fn objective(&self, x: &[f64]) -> f64 {
        self.obj.value(x) + self.obj_constant
    }

    pub(crate) fn violation(&self, x: &[f64]) -> f64 {
        let a = self.ineq.iter().map(|r| r.value(x).max(0.0)).fold(0.0, f64::max);
        self.eq.iter().map(|r| r.value(x).abs()).fold(a, f64::max)
    }

    /// Augmented Lagrangian value and gradient.
    fn merit(&self, x: &[f64], mu: &[f64], nu: &[f64], rho: f64, g: &mut [f64]) -> f64 {
        g.iter_mut().for_each(|v| *v = 0.0);
        let mut val = self.obj.value(x);
        self.obj.add_gradient(x, 1.0, g);
        for (r, &m) in self.ineq.iter().zip(mu) {
            let t = (r.value(x) + m / rho).max(0.0);
            if t > 0.0 {
                val += 0.5 * rho * t * t;
                r.add_gradient(x, rho * t, g);
            }
        }
        for (r, &l) in self.eq.iter().zip(nu) {
            let h = r.value(x);
            val += l * h + 0.5 * rho * h * h;
            r.add_gradient(x, l + rho * h, g);
        }
        val
    }

    fn projected_residual(&self, x: &[f64], g: &[f64]) -> f64 {
        (0..self.n)
            .map(|j| ((x[j] - g[j]).clamp(self.lo[j], self.hi[j]) - x[j]).abs())
            .fold(0.0, f64::max)
    }
}

fn out_of_time(deadline: Instant, cancel: Option<&CancelToken>) -> bool {
    Instant::now() >= deadline || cancel.is_some_and(|c| c.is_cancelled())
}

/// Nonmonotone spectral projected gradient on the merit function.
#[allow(clippy::too_many_arguments)]
fn spg(
    p: &Compiled,
    x: &mut Vec<f64>,
    mu: &[f64],
    nu: &[f64],
    rho: f64,
    tol: f64,
    max_iter: usize,
    deadline: Instant,
    cancel: Option<&CancelToken>,
) -> f64 {
    let n = p.n;
    let mut g = vec![0.0; n];
    let mut f = p.merit(x, mu, nu, rho, &mut g);
    let mut history = vec![f; 1];
    let mut alpha = 1.0 / g.iter().fold(1e-12, |a: f64, v| a.max(v.abs())).max(1e-12);
    alpha = alpha.clamp(1e-10, 1e10);
    let mut trial = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut residual = p.projected_residual(x, &g);
    for it in 0..max_iter {
        if residual <= tol || (it % 16 == 0 && out_of_time(deadline, cancel)) {
            break;
        }
        let d: Vec<f64> = (0..n)
            .map(|j| (x[j] - alpha * g[j]).clamp(p.lo[j], p.hi[j]) - x[j])
            .collect();
        let gd: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        let f_ref = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut lambda = 1.0;
        let mut f_new;
        loop {
            for j in 0..n {
                trial[j] = x[j] + lambda * d[j];
            }
            f_new = p.merit(&trial, mu, nu, rho, &mut g_new);
            if f_new <= f_ref + 1e-4 * lambda * gd || lambda < 1e-12 {
                break;
            }
            lambda *= 0.5;
        }
        if lambda < 1e-12 {
            break;
        }
        let mut ss = 0.0;
        let mut sy = 0.0;
        for j in 0..n {
            let s = trial[j] - x[j];
            ss += s * s;
            sy += s * (g_new[j] - g[j]);
        }
        std::mem::swap(x, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        history.push(f);
        if history.len() > 10 {
            history.remove(0);
        }
        alpha = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { 1e10f64.min(alpha * 10.0) };
        residual = p.projected_residual(x, &g);
    }
    residual
}

/// Locally minimizes the model objective from `start` ignoring
/// integrality. Returns the best feasible iterate seen, or the least
/// violated one when none is feasible; never returns a point worse than a
/// feasible start.
pub fn local_solve(
    model: &ModelIR,
    start: &[f64],
    opts: &NlpOptions,
    deadline: Instant,
    cancel: Option<&CancelToken>,
) -> NlpOutcome {
    let p = Compiled::new(model);
    let mut x: Vec<f64> = start.to_vec();
    x.resize(p.n, 0.0);
    for v in x.iter_mut() {
        if !v.is_finite() {
            *v = 0.0;
        }
    }
    p.project(&mut x);
    let start_point = x.clone();
    let start_obj = p.objective(&start_point);
    let start_viol = p.violation(&start_point);

    let mut mu = vec![0.0; p.ineq.len()];
    let mut nu = vec![0.0; p.eq.len()];
    let mut rho = 10.0;
    let mut prev_viol = f64::INFINITY;
    let mut best_feasible: Option<(f64, Vec<f64>)> = None;
    let mut least_violated = (start_viol, x.clone());
    let mut stationarity = f64::INFINITY;

    for k in 0..opts.max_outer {
        let tol = (0.1f64.powi(k as i32 + 1)).max(opts.opt_tol * 0.1);
        let residual = spg(&p, &mut x, &mu, &nu, rho, tol, opts.max_inner, deadline, cancel);
        let viol = p.violation(&x);
        let obj = p.objective(&x);
        if viol <= opts.feas_tol && best_feasible.as_ref().is_none_or(|(f, _)| obj < *f) {
            best_feasible = Some((obj, x.clone()));
        }
        if viol < least_violated.0 {
            least_violated = (viol, x.clone());
        }
        // multiplier update
        let mut changed = 0.0f64;
        for (r, m) in p.ineq.iter().zip(mu.iter_mut()) {
            let new = (*m + rho * r.value(&x)).max(0.0);
            changed = changed.max((new - *m).abs());
            *m = new;
        }
        for (r, l) in p.eq.iter().zip(nu.iter_mut()) {
            let h = r.value(&x);
            changed = changed.max((rho * h).abs());
            *l += rho * h;
        }
        stationarity = residual;
        if viol <= opts.feas_tol && residual <= opts.opt_tol && changed <= opts.opt_tol.max(1e-6) * (1.0 + rho) {
            break;
        }
        if viol > 0.25 * prev_viol {
            rho = (rho * 10.0).min(1e9);
        }
        prev_viol = viol;
        if out_of_time(deadline, cancel) {
            break;
        }
    }

    let (x, feasible) = match best_feasible {
        Some((f, xb)) => {
            if start_viol <= opts.feas_tol && start_obj < f {
                (start_point, true)
            } else {
                (xb, true)
            }
        }
        None if start_viol <= opts.feas_tol => (start_point, true),
        None => (least_violated.1, false),
    };
    // Lagrangian stationarity at the returned point
    let mut g = vec![0.0; p.n];
    p.obj.add_gradient(&x, 1.0, &mut g);
    for (r, &m) in p.ineq.iter().zip(&mu) {
        r.add_gradient(&x, m, &mut g);
    }
    for (r, &l) in p.eq.iter().zip(&nu) {
        r.add_gradient(&x, l, &mut g);
    }
    let lag_res = p.projected_residual(&x, &g);
    NlpOutcome {
        objective: p.objective(&x),
        max_violation: p.violation(&x),
        stationarity: lag_res.min(stationarity.max(lag_res)),
        feasible,
        x,
    }
}
