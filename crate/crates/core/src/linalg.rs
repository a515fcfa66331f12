//! Small dense helpers and a restarted GMRES working directly on D×D
//! matrices (the vectorized density-matrix space).

use faer::{c64, Mat, MatRef};

use crate::error::{Error, Result};

pub(crate) const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

/// Frobenius inner product `Σ conj(a_ij) b_ij`.
pub(crate) fn dot(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> c64 {
    let mut s = ZERO;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].conj() * b[(i, j)];
        }
    }
    s
}

pub(crate) fn fro_norm(a: MatRef<'_, c64>) -> f64 {
    a.norm_l2()
}

/// `y += alpha * x`
pub(crate) fn axpy(y: &mut Mat<c64>, alpha: c64, x: MatRef<'_, c64>) {
    for j in 0..y.ncols() {
        let col = y.col_as_slice_mut(j);
        for (i, v) in col.iter_mut().enumerate() {
            *v += alpha * x[(i, j)];
        }
    }
}

pub(crate) fn scaled(x: MatRef<'_, c64>, alpha: c64) -> Mat<c64> {
    Mat::from_fn(x.nrows(), x.ncols(), |i, j| alpha * x[(i, j)])
}

pub(crate) fn trace(a: MatRef<'_, c64>) -> c64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

pub(crate) fn max_abs(a: MatRef<'_, c64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

/// Column-stacking vectorization.
pub fn vectorize(a: MatRef<'_, c64>) -> Vec<c64> {
    let mut v = Vec::with_capacity(a.nrows() * a.ncols());
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            v.push(a[(i, j)]);
        }
    }
    v
}

pub fn unvectorize(v: &[c64], dim: usize) -> Mat<c64> {
    assert_eq!(v.len(), dim * dim);
    Mat::from_fn(dim, dim, |i, j| v[i + j * dim])
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GmresOptions {
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self { tol: 1e-12, restart: 80, max_iter: 1200 }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GmresStats {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` with restarted GMRES. Convergence is declared on the
/// residual norm relative to `‖b‖`. Running out of iterations is not an
/// error: the best iterate is returned with `converged == false` so the
/// caller can judge it against its own residual.
pub(crate) fn gmres(
    mut apply: impl FnMut(MatRef<'_, c64>) -> Mat<c64>,
    b: MatRef<'_, c64>,
    x0: Option<Mat<c64>>,
    opts: GmresOptions,
) -> Result<(Mat<c64>, GmresStats)> {
    let (nr, nc) = (b.nrows(), b.ncols());
    let mut x = x0.unwrap_or_else(|| Mat::zeros(nr, nc));
    let bnorm = fro_norm(b);
    if bnorm == 0.0 {
        return Ok((Mat::zeros(nr, nc), GmresStats { iterations: 0, relative_residual: 0.0, converged: true }));
    }
    let m = opts.restart.max(1);
    let mut total = 0usize;
    loop {
        let ax = apply(x.as_ref());
        let mut r = b.to_owned();
        axpy(&mut r, c64::new(-1.0, 0.0), ax.as_ref());
        let beta = fro_norm(r.as_ref());
        let rel = beta / bnorm;
        if rel <= opts.tol || total >= opts.max_iter {
            let stats = GmresStats { iterations: total, relative_residual: rel, converged: rel <= opts.tol };
            return Ok((x, stats));
        }

        let mut basis: Vec<Mat<c64>> = vec![scaled(r.as_ref(), c64::new(1.0 / beta, 0.0))];
        let mut h = vec![vec![ZERO; m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![ZERO; m];
        let mut g = vec![ZERO; m + 1];
        g[0] = c64::new(beta, 0.0);
        let mut k = 0;
        for j in 0..m {
            let mut w = apply(basis[j].as_ref());
            total += 1;
            // modified Gram-Schmidt, repeated once for stability
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let hij = dot(v.as_ref(), w.as_ref());
                    h[i][j] += hij;
                    axpy(&mut w, -hij, v.as_ref());
                }
            }
            let hn = fro_norm(w.as_ref());
            h[j + 1][j] = c64::new(hn, 0.0);

            for i in 0..j {
                let (a, bb) = (h[i][j], h[i + 1][j]);
                h[i][j] = a * cs[i] + sn[i] * bb;
                h[i + 1][j] = -sn[i].conj() * a + bb * cs[i];
            }
            let (a, bb) = (h[j][j], h[j + 1][j]);
            let rho = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if a.norm() == 0.0 {
                cs[j] = 0.0;
                sn[j] = c64::new(1.0, 0.0);
                h[j][j] = bb;
            } else {
                let phase = a / a.norm();
                cs[j] = a.norm() / rho;
                sn[j] = phase * bb.conj() / rho;
                h[j][j] = phase * rho;
            }
            h[j + 1][j] = ZERO;
            g[j + 1] = -sn[j].conj() * g[j];
            g[j] *= cs[j];

            k = j + 1;
            let est = g[j + 1].norm() / bnorm;
            if est <= opts.tol || total >= opts.max_iter || hn == 0.0 {
                break;
            }
            basis.push(scaled(w.as_ref(), c64::new(1.0 / hn, 0.0)));
        }

        let mut y = vec![ZERO; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for l in i + 1..k {
                s -= h[i][l] * y[l];
            }
            if h[i][i].norm() == 0.0 {
                return Err(Error::Singular("GMRES Hessenberg has a zero pivot".into()));
            }
            y[i] = s / h[i][i];
        }
        for (yi, v) in y.iter().zip(&basis) {
            axpy(&mut x, *yi, v.as_ref());
        }
    }
}
