//! Compressed sparse row storage for operators on the truncated Hilbert space.

use std::ops::{Add, Mul, Neg, Sub};

use faer::{c64, Mat, MatRef};

/// A complex matrix in CSR form.
///
/// Every operator in the model (ladder operators, Hamiltonians, collapse
/// operators and the vectorized Liouvillian) is stored this way; the dense
/// form is produced on demand with [`Operator::to_dense`].
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<c64>,
}

impl Operator {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![c64::new(1.0, 0.0); n])
    }

    pub fn diagonal(diag: &[c64]) -> Self {
        let n = diag.len();
        Self::from_triplets(n, n, diag.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    /// Builds a matrix from `(row, col, value)` entries. Duplicates are summed
    /// and exact zeros are dropped.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, c64)>,
    ) -> Self {
        let mut entries: Vec<(usize, usize, c64)> = triplets.into_iter().collect();
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));

        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<c64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            assert!(i < nrows && j < ncols, "entry ({i}, {j}) outside {nrows}x{ncols}");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Self { nrows, ncols, indptr, indices, values }.pruned()
    }

    /// Dense to sparse, dropping entries with magnitude `<= tol`.
    pub fn from_dense(m: MatRef<'_, c64>, tol: f64) -> Self {
        let mut trip = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v.norm() > tol {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), trip)
    }

    fn pruned(self) -> Self {
        if self.values.iter().all(|v| *v != c64::new(0.0, 0.0)) {
            return self;
        }
        let trip: Vec<_> = self.iter().filter(|(_, _, v)| *v != c64::new(0.0, 0.0)).collect();
        let (nrows, ncols) = (self.nrows, self.ncols);
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut values = Vec::with_capacity(trip.len());
        for (i, j, v) in trip {
            indptr[i + 1] += 1;
            indices.push(j);
            values.push(v);
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Self { nrows, ncols, indptr, indices, values }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Side length of a square operator.
    pub fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows, self.ncols);
        self.nrows
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, c64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// All stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, c64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => c64::new(0.0, 0.0),
        }
    }

    pub fn to_dense(&self) -> Mat<c64> {
        let mut m = Mat::<c64>::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.iter().map(|(i, j, v)| (j, i, v)))
    }

    pub fn conj(&self) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = v.conj());
        out
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.iter().map(|(i, j, v)| (j, i, v.conj())))
    }

    pub fn scale(&self, s: c64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out.pruned()
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Operator) -> Self {
        let (nr, nc) = (self.nrows * other.nrows, self.ncols * other.ncols);
        let mut trip = Vec::with_capacity(self.nnz() * other.nnz());
        for (i1, j1, v1) in self.iter() {
            for (i2, j2, v2) in other.iter() {
                trip.push((i1 * other.nrows + i2, j1 * other.ncols + j2, v1 * v2));
            }
        }
        Self::from_triplets(nr, nc, trip)
    }

    pub fn matmul(&self, other: &Operator) -> Self {
        assert_eq!(self.ncols, other.nrows, "matmul shape mismatch");
        let mut trip = Vec::new();
        let mut acc = vec![c64::new(0.0, 0.0); other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if acc[j] == c64::new(0.0, 0.0) {
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            for &j in &touched {
                trip.push((i, j, acc[j]));
                acc[j] = c64::new(0.0, 0.0);
            }
            touched.clear();
        }
        Self::from_triplets(self.nrows, other.ncols, trip)
    }

    /// `self · m` for a dense right-hand side.
    pub fn mul_dense(&self, m: MatRef<'_, c64>) -> Mat<c64> {
        assert_eq!(self.ncols, m.nrows());
        let mut out = Mat::<c64>::zeros(self.nrows, m.ncols());
        for j in 0..m.ncols() {
            for i in 0..self.nrows {
                let mut s = c64::new(0.0, 0.0);
                for (k, v) in self.row(i) {
                    s += v * m[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    /// `m · self` for a dense left-hand side.
    pub fn dense_mul(&self, m: MatRef<'_, c64>) -> Mat<c64> {
        assert_eq!(m.ncols(), self.nrows);
        let mut out = Mat::<c64>::zeros(m.nrows(), self.ncols);
        for k in 0..self.nrows {
            for (j, v) in self.row(k) {
                for i in 0..m.nrows() {
                    out[(i, j)] += m[(i, k)] * v;
                }
            }
        }
        out
    }

    /// `self · m · self†`.
    pub fn sandwich(&self, m: MatRef<'_, c64>) -> Mat<c64> {
        let left = self.mul_dense(m);
        // (A m) A† : column j of the result is Σ_k (A m)[:, k] conj(A[j, k])
        let mut out = Mat::<c64>::zeros(self.nrows, self.nrows);
        for j in 0..self.nrows {
            for (k, v) in self.row(j) {
                let v = v.conj();
                for i in 0..self.nrows {
                    out[(i, j)] += left[(i, k)] * v;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[c64]) -> Vec<c64> {
        assert_eq!(self.ncols, x.len());
        (0..self.nrows).map(|i| self.row(i).map(|(k, v)| v * x[k]).sum()).collect()
    }

    pub fn trace(&self) -> c64 {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).sum()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows).map(|i| self.row(i).map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest entry of `|A - A†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        (self - &self.adjoint()).max_abs()
    }

    pub fn commutator(&self, other: &Operator) -> Self {
        &self.matmul(other) - &other.matmul(self)
    }

    fn combine(&self, other: &Operator, sign: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols), "shape mismatch");
        Self::from_triplets(
            self.nrows,
            self.ncols,
            self.iter().chain(other.iter().map(|(i, j, v)| (i, j, v * sign))),
        )
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.combine(rhs, 1.0)
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        self.combine(rhs, -1.0)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.matmul(rhs)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scale(c64::new(rhs, 0.0))
    }
}

impl Mul<c64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: c64) -> Operator {
        self.scale(rhs)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale(c64::new(-1.0, 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> c64 {
        c64::new(re, 0.0)
    }

    #[test]
    fn duplicates_are_summed_and_zeros_dropped() {
        let m = Operator::from_triplets(2, 2, [(0, 1, c(1.0)), (0, 1, c(2.0)), (1, 0, c(1.0)), (1, 0, c(-1.0))]);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 1), c(3.0));
    }

    #[test]
    fn sparse_products_match_dense() {
        let a = Operator::from_triplets(3, 3, [(0, 1, c64::new(1.0, 2.0)), (2, 0, c(3.0)), (1, 1, c(-1.0))]);
        let b = Operator::from_triplets(3, 3, [(1, 2, c(2.0)), (0, 0, c64::new(0.0, 1.0)), (2, 2, c(1.0))]);
        let dense = &a.to_dense() * &b.to_dense();
        let diff = &a.matmul(&b).to_dense() - &dense;
        assert!(diff.norm_max() < 1e-14);

        let x = Mat::<c64>::from_fn(3, 3, |i, j| c64::new(i as f64, j as f64 * 0.5));
        assert!((&a.mul_dense(x.as_ref()) - &a.to_dense() * &x).norm_max() < 1e-14);
        assert!((&a.dense_mul(x.as_ref()) - &x * &a.to_dense()).norm_max() < 1e-14);
        let s = &(&a.to_dense() * &x) * a.to_dense().adjoint();
        assert!((&a.sandwich(x.as_ref()) - &s).norm_max() < 1e-14);
    }

    #[test]
    fn kron_layout_is_row_major_blocks() {
        let a = Operator::from_triplets(2, 2, [(0, 1, c(1.0))]);
        let i2 = Operator::identity(2);
        let k = a.kron(&i2);
        assert_eq!(k.get(0, 2), c(1.0));
        assert_eq!(k.get(1, 3), c(1.0));
        assert_eq!(k.nnz(), 2);
    }
}
