use faer::{c64, Mat, MatRef};

use super::{DensityMatrix, Superoperator};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step in μs; chosen from ‖L‖ when `None`.
    pub h0: Option<f64>,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12, h0: None, h_min: 1e-14, max_steps: 5_000_000 }
    }
}

// Dormand-Prince 5(4) tableau
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `ρ̇ = L(ρ)` from `t = 0` and returns the state at each of the
/// requested (non-decreasing, non-negative) times.
pub fn evolve(rho0: &DensityMatrix, l: &Superoperator, times: &[f64]) -> Result<Vec<DensityMatrix>> {
    evolve_with(rho0.as_ref(), l, times, &EvolveOptions::default())
        .map(|v| v.into_iter().map(|m| DensityMatrix { mat: m }).collect())
}

/// As [`evolve`] for an arbitrary (not necessarily physical) initial operator.
pub fn evolve_with(x0: MatRef<'_, c64>, l: &Superoperator, times: &[f64], opts: &EvolveOptions) -> Result<Vec<Mat<c64>>> {
    if x0.nrows() != l.dim() || x0.ncols() != l.dim() {
        return Err(Error::Dimension(format!("state is {}x{}, generator acts on {}", x0.nrows(), x0.ncols(), l.dim())));
    }
    if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("times must be non-negative and non-decreasing".into()));
    }
    let scale = l.norm_inf();
    let mut h = opts.h0.unwrap_or(if scale > 0.0 { 0.01 / scale } else { 1.0 });
    let mut t = 0.0;
    let mut y = x0.to_owned();
    let mut k1 = l.apply(y.as_ref());
    let mut out = Vec::with_capacity(times.len());
    let mut steps = 0usize;

    for &target in times {
        while t < target {
            let last = target - t <= h;
            let hs = if last { target - t } else { h };
            let mut ks: Vec<Mat<c64>> = vec![k1.clone()];
            for s in 1..7 {
                let mut ys = y.clone();
                for (r, kr) in ks.iter().enumerate() {
                    if A[s][r] != 0.0 {
                        linalg::axpy(&mut ys, c64::new(hs * A[s][r], 0.0), kr.as_ref());
                    }
                }
                ks.push(l.apply(ys.as_ref()));
            }
            let mut y5 = y.clone();
            let mut err = Mat::<c64>::zeros(y.nrows(), y.ncols());
            for s in 0..7 {
                if B5[s] != 0.0 {
                    linalg::axpy(&mut y5, c64::new(hs * B5[s], 0.0), ks[s].as_ref());
                }
                linalg::axpy(&mut err, c64::new(hs * (B5[s] - B4[s]), 0.0), ks[s].as_ref());
            }
            let mut e = 0.0f64;
            for j in 0..y.ncols() {
                for i in 0..y.nrows() {
                    let sc = opts.atol + opts.rtol * y[(i, j)].norm().max(y5[(i, j)].norm());
                    e = e.max(err[(i, j)].norm() / sc);
                }
            }
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::NoConvergence { iterations: steps, residual: e });
            }
            if e <= 1.0 {
                t = if last { target } else { t + hs };
                y = y5;
                // FSAL: the 7th stage is L(y_{n+1})
                k1 = ks.pop().unwrap();
                let grow = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
                if !last {
                    h = hs * grow;
                }
            } else {
                h = hs * (0.9 * e.powf(-0.2)).clamp(0.1, 0.9);
                if h < opts.h_min {
                    return Err(Error::StepUnderflow { t, h });
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{annihilation, Operator};
    use crate::lindblad::{expectation, liouvillian};

    #[test]
    fn zero_generator_is_identity_map() {
        let l = liouvillian(&Operator::zeros(3, 3), &[]).unwrap();
        let rho = DensityMatrix::basis(3, 1);
        for r in evolve(&rho, &l, &[0.0, 1.0, 10.0]).unwrap() {
            assert_eq!(r, rho);
        }
    }

    #[test]
    fn single_photon_decays_exponentially() {
        let kappa: f64 = 0.69;
        let a = annihilation(4).unwrap();
        let l = liouvillian(&Operator::zeros(4, 4), &[&a * kappa.sqrt()]).unwrap();
        let times = [0.0, 0.5, 1.0, 2.0, 5.0];
        let states = evolve(&DensityMatrix::basis(4, 1), &l, &times).unwrap();
        let n = a.adjoint().matmul(&a);
        for (t, r) in times.iter().zip(&states) {
            let got = expectation(&n, r).unwrap().re;
            assert!((got - (-kappa * t).exp()).abs() < 1e-8, "t={t}: {got}");
            assert!((r.trace().re - 1.0).abs() < 1e-9);
        }
    }
}
