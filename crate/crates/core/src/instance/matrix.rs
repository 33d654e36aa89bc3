//! Sparse symmetric matrices stored by their upper triangle.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Symmetric matrix holding only the `row <= col` triangle.
///
/// The quadratic form is `x^T M x = sum_i M_ii x_i^2 + 2 sum_{i<j} M_ij x_i x_j`.
/// Entries are kept sorted by `(row, col)`, unique, finite and nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymSparseMatrix {
    dim: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SymSparseMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    /// Builds a matrix from triplets in either triangle. Duplicate keys are
    /// summed, entries that cancel to zero are dropped.
    ///
    /// Panics if an index is out of range or a value is not finite.
    pub fn from_triplets<I>(dim: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "index ({r},{c}) out of range for dim {dim}");
            assert!(v.is_finite(), "non-finite matrix entry at ({r},{c})");
            let key = if r <= c { (r, c) } else { (c, r) };
            *acc.entry(key).or_insert(0.0) += v;
        }
        let entries = acc
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((r, c), v)| (r, c, v))
            .collect();
        Self { dim, entries }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_triplets(dim, (0..dim).map(|i| (i, i, 1.0)))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Self::from_triplets(
            values.len(),
            values.iter().enumerate().map(|(i, &v)| (i, i, v)),
        )
    }

    /// Builds from a dense symmetric matrix, reading the upper triangle.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        let n = m.nrows();
        let mut t = Vec::new();
        for r in 0..n {
            for c in r..n {
                let v = m[(r, c)];
                if v != 0.0 {
                    t.push((r, c, v));
                }
            }
        }
        Self::from_triplets(n, t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Upper-triangle entries `(row, col, value)` with `row <= col`.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let key = if r <= c { (r, c) } else { (c, r) };
        match self
            .entries
            .binary_search_by(|&(er, ec, _)| (er, ec).cmp(&key))
        {
            Ok(pos) => self.entries[pos].2,
            Err(_) => 0.0,
        }
    }

    /// Same entries embedded in a larger dimension.
    pub fn resized(&self, dim: usize) -> Self {
        assert!(dim >= self.dim || self.entries.iter().all(|&(_, c, _)| c < dim));
        Self {
            dim,
            entries: self.entries.clone(),
        }
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.entries
            .iter()
            .map(|&(r, c, v)| {
                if r == c {
                    v * x[r] * x[r]
                } else {
                    2.0 * v * x[r] * x[c]
                }
            })
            .sum()
    }

    /// Full symmetric product `M x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
    }

    /// Column `j` of the full symmetric matrix as sparse pairs.
    pub fn column(&self, j: usize) -> Vec<(usize, f64)> {
        self.entries
            .iter()
            .filter_map(|&(r, c, v)| {
                if c == j {
                    Some((r, v))
                } else if r == j {
                    Some((c, v))
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
        m
    }

    /// Sorted indices touched by at least one entry.
    pub fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .entries
            .iter()
            .flat_map(|&(r, c, _)| [r, c])
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Dense principal submatrix on the given (sorted, unique) indices.
    pub fn principal_dense(&self, idx: &[usize]) -> DMatrix<f64> {
        let mut pos = vec![usize::MAX; self.dim];
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        let mut m = DMatrix::zeros(idx.len(), idx.len());
        for &(r, c, v) in &self.entries {
            let (pr, pc) = (pos[r], pos[c]);
            if pr != usize::MAX && pc != usize::MAX {
                m[(pr, pc)] = v;
                m[(pc, pr)] = v;
            }
        }
        m
    }

    /// Sparse principal submatrix on `idx`, re-indexed to `0..idx.len()`.
    pub fn principal(&self, idx: &[usize]) -> SymSparseMatrix {
        let mut pos = vec![usize::MAX; self.dim];
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        let t = self.entries.iter().filter_map(|&(r, c, v)| {
            let (pr, pc) = (pos[r], pos[c]);
            (pr != usize::MAX && pc != usize::MAX).then_some((pr, pc, v))
        });
        SymSparseMatrix::from_triplets(idx.len(), t)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_triplets(self.dim, self.entries.iter().map(|&(r, c, v)| (r, c, v * s)))
    }

    /// `self + diag(d)`.
    pub fn add_diagonal(&self, d: &[(usize, f64)]) -> Self {
        Self::from_triplets(
            self.dim,
            self.entries
                .iter()
                .copied()
                .chain(d.iter().map(|&(i, v)| (i, i, v))),
        )
    }

    pub fn add(&self, other: &SymSparseMatrix) -> Self {
        assert_eq!(self.dim, other.dim);
        Self::from_triplets(
            self.dim,
            self.entries.iter().chain(other.entries.iter()).copied(),
        )
    }

    /// Infinity norm of the full symmetric matrix.
    pub fn norm_inf(&self) -> f64 {
        let mut rows = vec![0.0; self.dim];
        for &(r, c, v) in &self.entries {
            rows[r] += v.abs();
            if r != c {
                rows[c] += v.abs();
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    /// Reindexes entries through `map` into a matrix of dimension `dim`.
    pub fn remapped(&self, dim: usize, map: impl Fn(usize) -> usize) -> Self {
        Self::from_triplets(dim, self.entries.iter().map(|&(r, c, v)| (map(r), map(c), v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn duplicates_are_summed_and_canonicalized() {
        let m = SymSparseMatrix::from_triplets(3, [(1, 0, 2.0), (0, 1, 1.0), (2, 2, 0.0)]);
        assert_eq!(m.entries(), &[(0, 1, 3.0)]);
        assert_eq!(m.get(1, 0), 3.0);
        assert_eq!(m.get(2, 2), 0.0);
    }

    #[test]
    fn cancelling_entries_vanish() {
        let m = SymSparseMatrix::from_triplets(2, [(0, 0, 1.5), (0, 0, -1.5)]);
        assert!(m.is_empty());
    }

    #[test]
    fn principal_submatrix() {
        let m = SymSparseMatrix::from_triplets(3, [(0, 0, 1.0), (0, 2, 4.0), (1, 1, 2.0), (2, 2, 3.0)]);
        let p = m.principal(&[0, 2]);
        assert_eq!(p.to_dense(), DMatrix::from_row_slice(2, 2, &[1.0, 4.0, 4.0, 3.0]));
    }

    proptest! {
        #[test]
        fn dense_matches_sparse_products(
            vals in proptest::collection::vec((0usize..4, 0usize..4, -5.0f64..5.0), 0..12),
            x in proptest::collection::vec(-3.0f64..3.0, 4),
        ) {
            let m = SymSparseMatrix::from_triplets(4, vals);
            let d = m.to_dense();
            prop_assert_eq!(d.transpose(), d.clone());
            let xv = nalgebra::DVector::from_column_slice(&x);
            let dense_q = xv.dot(&(&d * &xv));
            prop_assert!((dense_q - m.quad_form(&x)).abs() <= 1e-9 * (1.0 + dense_q.abs()));
            let y = m.mul_vec(&x);
            let dy = &d * &xv;
            for i in 0..4 {
                prop_assert!((y[i] - dy[i]).abs() <= 1e-9 * (1.0 + dy[i].abs()));
            }
            prop_assert_eq!(SymSparseMatrix::from_dense(&d), m);
        }
    }
}
