//! GKSL generator, steady states, time evolution and truncation ladders.
//!
//! Vectorization is column-stacking, `vec(ρ)[i + j·D] = ρ[i, j]`, so that
//!
//! ```text
//! L = −i(I⊗H − Hᵀ⊗I) + Σ_k ( c̄_k⊗c_k − ½ I⊗c_k†c_k − ½ (c_k†c_k)ᵀ⊗I )
//! ```
//!
//! The generator is stored through its Hamiltonian and collapse operators and
//! applied in matrix form; [`Superoperator::to_sparse`] assembles the D²×D²
//! matrix when it is needed explicitly.

mod convergence;
mod evolve;
pub(crate) mod steady;

pub use convergence::{converge_truncation, ConvergenceOptions, ConvergedTruncation};
pub use evolve::{evolve, EvolveOptions};
pub use steady::{null_space_dense, steady_state, steady_state_with, SteadyState, SteadyStateMethod};

use faer::{c64, Mat, MatRef, Side};

use crate::error::{Error, Result};
use crate::fock::Operator;
use crate::linalg::{self, ZERO};

/// Tolerances attached to a physical density matrix.
pub const TRACE_TOL: f64 = 1e-9;
pub const HERMITIAN_TOL: f64 = 1e-9;
pub const POSITIVITY_TOL: f64 = -1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: Mat<c64>,
}

impl DensityMatrix {
    /// Wraps a matrix without checking the physical invariants.
    pub fn from_mat(mat: Mat<c64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() || mat.nrows() == 0 {
            return Err(Error::Dimension(format!("density matrix must be square, got {}x{}", mat.nrows(), mat.ncols())));
        }
        Ok(Self { mat })
    }

    /// `|k⟩⟨k|` in a `dim`-dimensional space.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut mat = Mat::zeros(dim, dim);
        mat[(k, k)] = c64::new(1.0, 0.0);
        Self { mat }
    }

    pub fn pure(psi: &[c64]) -> Self {
        let n: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let mat = Mat::from_fn(psi.len(), psi.len(), |i, j| psi[i] * psi[j].conj() / n);
        Self { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_ref(&self) -> MatRef<'_, c64> {
        self.mat.as_ref()
    }

    pub fn into_inner(self) -> Mat<c64> {
        self.mat
    }

    pub fn trace(&self) -> c64 {
        linalg::trace(self.mat.as_ref())
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut m = 0.0f64;
        for j in 0..d {
            for i in 0..=j {
                m = m.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        m
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let herm = Mat::from_fn(self.dim(), self.dim(), |i, j| (self.mat[(i, j)] + self.mat[(j, i)].conj()) * 0.5);
        let ev = herm
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Singular(format!("eigendecomposition failed: {e:?}")))?;
        Ok(ev.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// Unit trace, Hermiticity and positivity within the module tolerances.
    pub fn check(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - c64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidParameter(format!("trace = {tr}")));
        }
        let h = self.hermiticity_defect();
        if h > HERMITIAN_TOL {
            return Err(Error::InvalidParameter(format!("hermiticity defect {h:.3e}")));
        }
        let m = self.min_eigenvalue()?;
        if m < POSITIVITY_TOL {
            return Err(Error::InvalidParameter(format!("negative eigenvalue {m:.3e}")));
        }
        Ok(())
    }

    /// Diagonal in the product basis.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).collect()
    }

    pub(crate) fn normalized(mut mat: Mat<c64>) -> Self {
        let tr = linalg::trace(mat.as_ref());
        let d = mat.nrows();
        // enforce exact Hermiticity; the solvers only reach it to roundoff
        let herm = Mat::from_fn(d, d, |i, j| (mat[(i, j)] + mat[(j, i)].conj()) * 0.5 / tr);
        mat = herm;
        Self { mat }
    }
}

/// `Tr[op·ρ]`.
pub fn expectation(op: &Operator, rho: &DensityMatrix) -> Result<c64> {
    if op.nrows() != rho.dim() || op.ncols() != rho.dim() {
        return Err(Error::Dimension(format!("operator {}x{} vs state {}", op.nrows(), op.ncols(), rho.dim())));
    }
    let mut s = ZERO;
    for (i, k, v) in op.iter() {
        s += v * rho.mat[(k, i)];
    }
    Ok(s)
}

/// GKSL generator `L(ρ) = −i(Kρ − ρK†) + Σ c ρ c†` with the effective
/// non-Hermitian Hamiltonian `K = H − (i/2)Σ c†c`.
#[derive(Debug, Clone)]
pub struct Superoperator {
    dim: usize,
    h: Operator,
    c_ops: Vec<Operator>,
    k: Operator,
    k_adj: Operator,
}

/// Assembles the Liouvillian of `H` and the collapse operators.
pub fn liouvillian(h: &Operator, c_ops: &[Operator]) -> Result<Superoperator> {
    if !h.is_square() {
        return Err(Error::Dimension(format!("Hamiltonian is {}x{}", h.nrows(), h.ncols())));
    }
    let dim = h.nrows();
    for (k, c) in c_ops.iter().enumerate() {
        if c.nrows() != dim || c.ncols() != dim {
            return Err(Error::Dimension(format!("collapse operator {k} is {}x{}, expected {dim}", c.nrows(), c.ncols())));
        }
    }
    let defect = h.hermiticity_defect();
    if defect > 1e-9 * h.max_abs().max(1.0) {
        return Err(Error::InvalidParameter(format!("Hamiltonian is not Hermitian (defect {defect:.3e})")));
    }
    let mut k = h.clone();
    for c in c_ops {
        k = &k - &(&c.adjoint().matmul(c) * c64::new(0.0, 0.5));
    }
    let k_adj = k.adjoint();
    Ok(Superoperator { dim, h: h.clone(), c_ops: c_ops.to_vec(), k, k_adj })
}

impl Superoperator {
    /// Hilbert-space dimension D (the generator acts on D² entries).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.h
    }

    pub fn c_ops(&self) -> &[Operator] {
        &self.c_ops
    }

    /// `K = H − (i/2)Σ c†c`.
    pub fn effective_hamiltonian(&self) -> &Operator {
        &self.k
    }

    pub fn apply(&self, rho: MatRef<'_, c64>) -> Mat<c64> {
        let mut out = self.apply_jumps(rho);
        let kr = self.k.mul_dense(rho);
        let rk = self.k_adj.dense_mul(rho);
        let mi = c64::new(0.0, -1.0);
        for j in 0..self.dim {
            for i in 0..self.dim {
                out[(i, j)] += mi * (kr[(i, j)] - rk[(i, j)]);
            }
        }
        out
    }

    /// The recycling part `Σ c ρ c†`.
    pub fn apply_jumps(&self, rho: MatRef<'_, c64>) -> Mat<c64> {
        let mut out = Mat::zeros(self.dim, self.dim);
        for c in &self.c_ops {
            out += c.sandwich(rho);
        }
        out
    }

    pub fn apply_vec(&self, v: &[c64]) -> Vec<c64> {
        linalg::vectorize(self.apply(linalg::unvectorize(v, self.dim).as_ref()).as_ref())
    }

    /// Explicit D²×D² matrix in the column-stacking convention.
    pub fn to_sparse(&self) -> Operator {
        let id = Operator::identity(self.dim);
        let mi = c64::new(0.0, -1.0);
        let mut l = &id.kron(&self.k) * mi;
        l = &l + &(&self.k.conj().kron(&id) * c64::new(0.0, 1.0));
        for c in &self.c_ops {
            l = &l + &c.conj().kron(c);
        }
        l
    }

    pub fn to_dense(&self) -> Mat<c64> {
        self.to_sparse().to_dense()
    }

    /// Maximum absolute row sum of the D²×D² matrix, computed row by row
    /// without assembling it.
    pub fn norm_inf(&self) -> f64 {
        let d = self.dim;
        let k_conj: Vec<Vec<(usize, c64)>> = (0..d).map(|j| self.k.row(j).map(|(l, v)| (l, v.conj())).collect()).collect();
        let mut best = 0.0f64;
        let mut row: Vec<(usize, c64)> = Vec::new();
        for j in 0..d {
            for i in 0..d {
                row.clear();
                // -i K[i,k] at column k + jD
                for (kc, v) in self.k.row(i) {
                    row.push((kc + j * d, c64::new(0.0, -1.0) * v));
                }
                // +i conj(K[j,l]) at column i + lD
                for &(l, v) in &k_conj[j] {
                    row.push((i + l * d, c64::new(0.0, 1.0) * v));
                }
                for c in &self.c_ops {
                    for (l, cv) in c.row(j) {
                        for (kc, v) in c.row(i) {
                            row.push((kc + l * d, cv.conj() * v));
                        }
                    }
                }
                row.sort_unstable_by_key(|e| e.0);
                let mut sum = 0.0;
                let mut idx = 0;
                while idx < row.len() {
                    let (col, mut acc) = row[idx];
                    idx += 1;
                    while idx < row.len() && row[idx].0 == col {
                        acc += row[idx].1;
                        idx += 1;
                    }
                    sum += acc.norm();
                }
                best = best.max(sum);
            }
        }
        best
    }

    /// Full spectrum of the generator (dense; intended for small systems).
    pub fn eigenvalues(&self) -> Result<Vec<c64>> {
        self.to_dense()
            .eigenvalues()
            .map_err(|e| Error::Singular(format!("eigenvalue decomposition failed: {e:?}")))
    }
}
