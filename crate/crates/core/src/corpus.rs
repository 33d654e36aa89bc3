//! Deterministic generator of small MIQCQP instances with a planted
//! feasible point, and the fixed desk corpus built from it.

use crate::instance::{LinearRow, MiqcqpInstance, QuadConstraint, SymSparseMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub n_binary: usize,
    pub n_general: usize,
    pub n_continuous: usize,
    /// Number of quadratic rows.
    pub m1: usize,
    /// Number of linear rows.
    pub m2: usize,
    /// General integers take values in `[l, l + range]`.
    pub int_range: u32,
    /// Fraction of off-diagonal pairs that receive a coefficient.
    pub density: f64,
    /// When false every matrix is made positive semidefinite.
    pub nonconvex: bool,
    /// Slack added to each row at the planted point; zero makes rows tight.
    pub slack: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            n_binary: 3,
            n_general: 1,
            n_continuous: 2,
            m1: 1,
            m2: 1,
            int_range: 4,
            density: 0.5,
            nonconvex: true,
            slack: 0.5,
            seed: 0,
        }
    }
}

impl GenParams {
    pub fn n(&self) -> usize {
        self.n_binary + self.n_general + self.n_continuous
    }
}

fn round2(v: f64) -> f64 {
    (v * 4.0).round() / 4.0
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, density: f64, convex: bool) -> SymSparseMatrix {
    let mut t = Vec::new();
    for r in 0..n {
        if rng.random_bool(0.7) {
            t.push((r, r, round2(rng.random_range(-2.0..2.0))));
        }
        for c in r + 1..n {
            if rng.random_bool(density) {
                t.push((r, c, round2(rng.random_range(-1.5..1.5))));
            }
        }
    }
    let m = SymSparseMatrix::from_triplets(n, t);
    if convex {
        // Gram matrix of a random low-rank factor
        let k = n.min(3).max(1);
        let f: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n).map(|_| round2(rng.random_range(-1.0..1.0))).collect())
            .collect();
        let mut g = Vec::new();
        for r in 0..n {
            for c in r..n {
                let v: f64 = f.iter().map(|row| row[r] * row[c]).sum();
                if v != 0.0 {
                    g.push((r, c, v));
                }
            }
        }
        SymSparseMatrix::from_triplets(n, g)
    } else {
        m
    }
}

/// Builds an instance and a point that satisfies every row, bound and
/// integrality requirement.
pub fn generate(p: &GenParams) -> (MiqcqpInstance, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let n = p.n();
    let mut inst = MiqcqpInstance::new(format!("gen{}", p.seed), n);
    let mut x = vec![0.0; n];
    for j in 0..n {
        if j < p.n_binary {
            inst.integer[j] = true;
            x[j] = rng.random_range(0..=1) as f64;
        } else if j < p.n_binary + p.n_general {
            let l = rng.random_range(-2i32..=1) as f64;
            inst.integer[j] = true;
            inst.lower[j] = l;
            inst.upper[j] = l + p.int_range.max(2) as f64;
            x[j] = l + rng.random_range(0..=p.int_range.max(2)) as f64;
        } else {
            let l = round2(rng.random_range(-1.0..0.5));
            let w = round2(rng.random_range(1.0..3.0));
            inst.lower[j] = l;
            inst.upper[j] = l + w;
            x[j] = rng.random_range(l..l + w);
        }
    }
    inst.objective.q = random_matrix(&mut rng, n, p.density, !p.nonconvex);
    inst.objective.a = (0..n).map(|_| round2(rng.random_range(-3.0..3.0))).collect();
    inst.objective.constant = round2(rng.random_range(-1.0..1.0));
    for _ in 0..p.m1 {
        let q = random_matrix(&mut rng, n, p.density, !p.nonconvex);
        let a: Vec<f64> = (0..n).map(|_| round2(rng.random_range(-2.0..2.0))).collect();
        let mut c = QuadConstraint { q, a, rhs: 0.0 };
        c.rhs = c.activity(&x) + p.slack * rng.random_range(0.0..1.0);
        inst.quad_constraints.push(c);
    }
    for _ in 0..p.m2 {
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            if rng.random_bool(0.6) {
                let v = round2(rng.random_range(-2.0..2.0));
                if v != 0.0 {
                    coeffs.push((j, v));
                }
            }
        }
        let mut r = LinearRow { coeffs, rhs: 0.0 };
        r.rhs = r.activity(&x) + p.slack * rng.random_range(0.0..1.0);
        inst.linear.push(r);
    }
    inst.validate().expect("generated instance is valid");
    (inst, x)
}

/// One corpus entry.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub instance: MiqcqpInstance,
    pub planted: Vec<f64>,
    /// Small enough for exhaustive enumeration.
    pub brute_forceable: bool,
}

/// The fixed 40-instance desk corpus: 10 box-constrained, 14 linearly
/// constrained and 16 quadratically constrained instances; the first half
/// of each group is small enough for enumeration.
pub fn desk_corpus() -> Vec<CorpusEntry> {
    let mut out = Vec::new();
    let groups: [(usize, usize, usize, &str); 3] = [(10, 0, 0, "bqp"), (14, 0, 2, "qp"), (16, 2, 1, "qcp")];
    let mut seed = 1000u64;
    for (count, m1, m2, tag) in groups {
        for i in 0..count {
            let small = i < count / 2;
            seed += 1;
            let mut p = if small {
                GenParams {
                    n_binary: 3 + i % 3,
                    n_general: i % 2,
                    n_continuous: if tag == "bqp" { i % 2 } else { 1 + i % 2 },
                    m1,
                    m2,
                    int_range: 3,
                    density: 0.5,
                    nonconvex: true,
                    slack: 0.5,
                    seed,
                }
            } else {
                GenParams {
                    n_binary: 8 + i % 5,
                    n_general: 1 + i % 2,
                    n_continuous: 3 + i % 3,
                    m1: if m1 > 0 { m1 + i % 2 } else { 0 },
                    m2: if m2 > 0 { m2 + i % 3 } else { 0 },
                    int_range: 5,
                    density: 0.3,
                    nonconvex: true,
                    slack: 1.0,
                    seed,
                }
            };
            if tag == "qp" && i % 7 == 3 {
                // a few linearly constrained instances keep the continuous
                // block convex
                p.n_continuous = 0;
            }
            let (mut instance, planted) = generate(&p);
            instance.name = format!("{tag}{:02}", i);
            out.push(CorpusEntry {
                instance,
                planted,
                brute_forceable: small,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{check_feasible, classify, ProblemClass};

    #[test]
    fn planted_points_are_feasible() {
        for seed in 0..50 {
            let (inst, x) = generate(&GenParams { seed, ..Default::default() });
            assert!(check_feasible(&inst, &x, 1e-9), "seed {seed}");
        }
    }

    #[test]
    fn desk_corpus_shape() {
        let c = desk_corpus();
        assert_eq!(c.len(), 40);
        assert_eq!(c.iter().filter(|e| e.brute_forceable).count(), 20);
        for class in [ProblemClass::Mibqp, ProblemClass::Miqp, ProblemClass::Miqcp] {
            assert!(c.iter().any(|e| classify(&e.instance) == class));
        }
        for e in &c {
            assert!(check_feasible(&e.instance, &e.planted, 1e-9), "{}", e.instance.name);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let p = GenParams { seed: 9, ..Default::default() };
        assert_eq!(generate(&p), generate(&p));
    }
}
