use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{c64, Mat, MatRef};
use log::debug;

use super::{DensityMatrix, Superoperator};
use crate::error::{Error, Result};
use crate::linalg::{self, gmres, GmresOptions, ZERO};

/// Systems up to this Hilbert-space dimension use the dense direct solver
/// under [`SteadyStateMethod::Auto`].
pub const DENSE_MAX_DIM: usize = 16;

const RESIDUAL_TOL: f64 = 1e-10;
const NULL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SteadyStateMethod {
    #[default]
    Auto,
    /// Dense LU with one row replaced by the trace constraint.
    Dense,
    /// GMRES preconditioned with the inverse of the no-jump generator.
    Iterative,
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    /// `max |L(ρ)|`.
    pub residual: f64,
    /// `‖L‖∞` of the D²×D² generator.
    pub norm_inf: f64,
    pub iterations: usize,
    pub method: SteadyStateMethod,
}

impl SteadyState {
    pub fn relative_residual(&self) -> f64 {
        if self.norm_inf == 0.0 {
            self.residual
        } else {
            self.residual / self.norm_inf
        }
    }
}

/// Unique steady state of `L`, normalized to unit trace.
pub fn steady_state(l: &Superoperator) -> Result<DensityMatrix> {
    Ok(steady_state_with(l, SteadyStateMethod::Auto)?.rho)
}

pub fn steady_state_with(l: &Superoperator, method: SteadyStateMethod) -> Result<SteadyState> {
    let method = match method {
        SteadyStateMethod::Auto if l.dim() <= DENSE_MAX_DIM => SteadyStateMethod::Dense,
        SteadyStateMethod::Auto => SteadyStateMethod::Iterative,
        m => m,
    };
    let (rho, iterations) = match method {
        SteadyStateMethod::Dense => (dense_solve(l)?, 0),
        _ => iterative_solve(l)?,
    };
    let residual = linalg::max_abs(l.apply(rho.as_ref()).as_ref());
    let norm_inf = l.norm_inf();
    let out = SteadyState { rho, residual, norm_inf, iterations, method };
    if out.relative_residual() > RESIDUAL_TOL {
        return Err(Error::NoConvergence { iterations, residual: out.relative_residual() });
    }
    debug!("steady state D={} via {:?}: {} iterations, relative residual {:.2e}", l.dim(), method, iterations, out.relative_residual());
    Ok(out)
}

/// Orthonormal basis (Frobenius) of the null space of `L`, from a dense SVD.
pub fn null_space_dense(l: &Superoperator) -> Result<Vec<Mat<c64>>> {
    let ld = l.to_dense();
    let svd = ld.svd().map_err(|e| Error::Singular(format!("SVD failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let n = s.nrows();
    let smax = s[0].re.max(1.0);
    let v = svd.V();
    Ok((0..n)
        .filter(|&k| s[k].re <= NULL_TOL * smax)
        .map(|k| linalg::unvectorize(v.col(k).iter().copied().collect::<Vec<_>>().as_slice(), l.dim()))
        .collect())
}

fn dense_solve(l: &Superoperator) -> Result<DensityMatrix> {
    let d = l.dim();
    let null = null_space_dense(l)?;
    if null.len() > 1 {
        return Err(Error::DegenerateSteadyState { multiplicity: null.len() });
    }
    let mut a = l.to_dense();
    let n = d * d;
    for j in 0..n {
        a[(0, j)] = ZERO;
    }
    for i in 0..d {
        a[(0, i + i * d)] = c64::new(1.0, 0.0);
    }
    let mut b = Mat::<c64>::zeros(n, 1);
    b[(0, 0)] = c64::new(1.0, 0.0);
    let x = a.full_piv_lu().solve(&b);
    let v: Vec<c64> = (0..n).map(|i| x[(i, 0)]).collect();
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Singular("trace-constrained generator is singular".into()));
    }
    Ok(DensityMatrix::normalized(linalg::unvectorize(&v, d)))
}

/// Inverse of the no-jump part `S(ρ) = −i(Kρ − ρK†)` (optionally shifted),
/// applied in the eigenbasis of `K = V Λ V⁻¹` where `S` is diagonal.
pub(crate) struct EigenPreconditioner {
    v: Mat<c64>,
    v_adj: Mat<c64>,
    v_inv: Mat<c64>,
    v_inv_adj: Mat<c64>,
    den: Mat<c64>,
}

impl EigenPreconditioner {
    pub(crate) fn new(l: &Superoperator) -> Result<Self> {
        let k = l.effective_hamiltonian().to_dense();
        let eig = k.eigen().map_err(|e| Error::Singular(format!("eigendecomposition of K failed: {e:?}")))?;
        let v = eig.U().to_owned();
        let lam: Vec<c64> = eig.S().column_vector().iter().copied().collect();
        let v_inv = v.partial_piv_lu().inverse();
        let d = lam.len();
        let den = Mat::from_fn(d, d, |i, j| c64::new(0.0, -1.0) * (lam[i] - lam[j].conj()));
        Ok(Self { v_adj: v.adjoint().to_owned(), v_inv_adj: v_inv.adjoint().to_owned(), v, v_inv, den })
    }

    /// `(S − σ)⁻¹ r`. Entries where `S − σ` vanishes (e.g. the vacuum of an
    /// undriven system) are replaced by a unit decay so the map stays finite.
    pub(crate) fn apply(&self, r: MatRef<'_, c64>, shift: c64) -> Mat<c64> {
        let mut x = &(&self.v_inv * r) * &self.v_inv_adj;
        let d = self.den.nrows();
        for j in 0..d {
            for i in 0..d {
                let mut den = self.den[(i, j)] - shift;
                if den.norm() < 1e-10 {
                    den = c64::new(-1.0, 0.0);
                }
                x[(i, j)] /= den;
            }
        }
        &(&self.v * &x) * &self.v_adj
    }

    /// `(S − σ)⁻¹ (L − σ) z`; close to `z` wherever the jumps are weak.
    pub(crate) fn apply_shifted(&self, l: &Superoperator, z: MatRef<'_, c64>, shift: c64) -> Mat<c64> {
        let mut lz = l.apply(z);
        linalg::axpy(&mut lz, -shift, z);
        self.apply(lz.as_ref(), shift)
    }
}

fn iterative_solve(l: &Superoperator) -> Result<(DensityMatrix, usize)> {
    let d = l.dim();
    let pre = EigenPreconditioner::new(l)?;
    let w = Mat::<c64>::from_fn(d, d, |i, j| if i == j { c64::new(1.0 / d as f64, 0.0) } else { ZERO });
    let pw = pre.apply(w.as_ref(), ZERO);
    // (L + w·tr)ρ = w, left-preconditioned with P ≈ L⁻¹
    let op = |x: MatRef<'_, c64>| {
        let mut y = pre.apply_shifted(l, x, ZERO);
        linalg::axpy(&mut y, linalg::trace(x), pw.as_ref());
        y
    };
    let opts = GmresOptions { tol: 1e-10, ..GmresOptions::default() };
    let (mut x, stats) = gmres(op, pw.as_ref(), None, opts)?;
    if !stats.converged {
        debug!("GMRES stopped at {} iterations, preconditioned residual {:.2e}", stats.iterations, stats.relative_residual);
    }
    let mut iterations = stats.iterations;

    // refinement against the unpreconditioned residual
    let norm = l.norm_inf();
    for _ in 0..3 {
        let rho = DensityMatrix::normalized(x.clone());
        let r = l.apply(rho.as_ref());
        if linalg::max_abs(r.as_ref()) <= 0.1 * RESIDUAL_TOL * norm {
            return Ok((rho, iterations));
        }
        x = rho.into_inner();
        let rhs = pre.apply((-&r).as_ref(), ZERO);
        let (dx, st) = gmres(op, rhs.as_ref(), None, opts)?;
        iterations += st.iterations;
        x += dx;
    }
    Ok((DensityMatrix::normalized(x), iterations))
}
