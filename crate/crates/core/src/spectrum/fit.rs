//! Levenberg-Marquardt fit of `A·(w/2)²/((f−f₀)²+(w/2)²) + c`.

use faer::linalg::solvers::Solve;
use faer::Mat;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzFit {
    /// GHz.
    pub center: f64,
    /// kHz.
    pub fwhm: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub rms_residual: f64,
    pub iterations: usize,
}

impl LorentzFit {
    pub fn eval(&self, f: f64) -> f64 {
        lorentzian(f, self.amplitude, self.center, self.fwhm * 1e-6, self.offset)
    }
}

/// Lorentzian of full width `w` (same units as `f`).
pub fn lorentzian(f: f64, amplitude: f64, f0: f64, w: f64, offset: f64) -> f64 {
    let hw2 = (w / 2.0).powi(2);
    amplitude * hw2 / ((f - f0).powi(2) + hw2) + offset
}

const MAX_ITER: usize = 500;

/// Least-squares Lorentzian fit. Frequencies in GHz; the width is reported in kHz.
pub fn lorentz_fit(freqs: &[f64], values: &[f64]) -> Result<LorentzFit> {
    if freqs.len() != values.len() {
        return Err(Error::Dimension(format!("{} frequencies vs {} values", freqs.len(), values.len())));
    }
    if freqs.len() < 5 {
        return Err(Error::FitFailed { reason: format!("need at least 5 points, got {}", freqs.len()), rms: f64::NAN });
    }
    let (imax, &ymax) = values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let ymin = values.iter().copied().fold(f64::INFINITY, f64::min);
    let span = ymax - ymin;
    if !(span > 0.0) || !span.is_finite() {
        return Err(Error::FitFailed { reason: "data is constant or non-finite".into(), rms: f64::NAN });
    }

    // deterministic start: peak position and half-maximum crossings
    let half = ymin + span / 2.0;
    let cross = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = imax;
        for i in range {
            if values[i] < half {
                let t = (values[prev] - half) / (values[prev] - values[i]);
                return Some(freqs[prev] + t * (freqs[i] - freqs[prev]));
            }
            prev = i;
        }
        None
    };
    let left = cross(&mut (0..imax).rev());
    let right = cross(&mut (imax + 1..freqs.len()));
    let fspan = freqs.iter().copied().fold(f64::NEG_INFINITY, f64::max) - freqs.iter().copied().fold(f64::INFINITY, f64::min);
    let w0 = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (freqs[imax] - l),
        (None, Some(r)) => 2.0 * (r - freqs[imax]),
        (None, None) => fspan / 2.0,
    }
    .abs()
    .max(fspan * 1e-9);

    // work in scaled coordinates: x = (f − f_peak)/w0, y = (v − ymin)/span
    let fc = freqs[imax];
    let xs: Vec<f64> = freqs.iter().map(|f| (f - fc) / w0).collect();
    let ys: Vec<f64> = values.iter().map(|v| (v - ymin) / span).collect();
    let mut p = [1.0, 0.0, 1.0, 0.0];
    let model = |p: &[f64; 4], x: f64| lorentzian(x, p[0], p[1], p[2], p[3]);
    let cost = |p: &[f64; 4]| xs.iter().zip(&ys).map(|(&x, &y)| (model(p, x) - y).powi(2)).sum::<f64>();

    let mut lambda = 1e-3;
    let mut c = cost(&p);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        iterations += 1;
        let mut jtj = Mat::<f64>::zeros(4, 4);
        let mut jtr = Mat::<f64>::zeros(4, 1);
        for (&x, &y) in xs.iter().zip(&ys) {
            let (a, x0, w, off) = (p[0], p[1], p[2], p[3]);
            let hw2 = w * w / 4.0;
            let d = (x - x0).powi(2) + hw2;
            let l = hw2 / d;
            let jac = [l, a * l * 2.0 * (x - x0) / d, a * (w / 2.0) * (x - x0).powi(2) / (d * d), 1.0];
            let r = y - (a * l + off);
            for i in 0..4 {
                jtr[(i, 0)] += jac[i] * r;
                for k in 0..4 {
                    jtj[(i, k)] += jac[i] * jac[k];
                }
            }
        }
        let mut step_taken = false;
        for _ in 0..30 {
            let mut m = jtj.clone();
            for i in 0..4 {
                m[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let delta = m.partial_piv_lu().solve(&jtr);
            let trial = [p[0] + delta[(0, 0)], p[1] + delta[(1, 0)], p[2] + delta[(2, 0)], p[3] + delta[(3, 0)]];
            let ct = cost(&trial);
            if ct.is_finite() && ct <= c {
                let rel_step = (0..4).map(|i| delta[(i, 0)].abs() / (p[i].abs() + 1e-8)).fold(0.0, f64::max);
                let small_gain = c - ct <= 1e-15 * c.max(1e-300);
                p = trial;
                c = ct;
                lambda = (lambda * 0.3).max(1e-12);
                step_taken = true;
                if rel_step < 1e-12 || small_gain || c < 1e-28 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged || !step_taken {
            converged = true;
            break;
        }
    }
    let rms = (c / xs.len() as f64).sqrt() * span;
    if !converged {
        return Err(Error::FitFailed { reason: format!("no convergence in {MAX_ITER} iterations"), rms });
    }
    if !(p[2].abs() > 0.0) || !p.iter().all(|v| v.is_finite()) {
        return Err(Error::FitFailed { reason: "degenerate width".into(), rms });
    }
    Ok(LorentzFit {
        center: fc + p[1] * w0,
        fwhm: p[2].abs() * w0 * 1e6,
        amplitude: p[0] * span,
        offset: ymin + p[3] * span,
        rms_residual: rms,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Vec<f64> {
        (0..401).map(|i| 5.859 + i as f64 * 5e-6).collect()
    }

    #[test]
    fn exact_lorentzian_is_recovered() {
        let f = grid();
        let v: Vec<f64> = f.iter().map(|&x| lorentzian(x, 3.0, 5.8601, 110e-6, 0.2)).collect();
        let fit = lorentz_fit(&f, &v).unwrap();
        assert!((fit.center - 5.8601).abs() / 5.8601 < 1e-6);
        assert!((fit.fwhm - 110.0).abs() / 110.0 < 1e-6, "{fit:?}");
        assert!((fit.amplitude - 3.0).abs() / 3.0 < 1e-6);
        assert!((fit.offset - 0.2).abs() / 0.2 < 1e-6);
    }

    #[test]
    fn noisy_lorentzian_width_within_five_percent() {
        let f = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v: Vec<f64> = f
            .iter()
            .map(|&x| lorentzian(x, 1.0, 5.86, 200e-6, 0.0) + 0.01 * (rng.gen::<f64>() * 2.0 - 1.0))
            .collect();
        let fit = lorentz_fit(&f, &v).unwrap();
        assert!((fit.fwhm - 200.0).abs() / 200.0 < 0.05, "{fit:?}");
    }

    #[test]
    fn constant_and_short_inputs_fail() {
        let f = grid();
        assert!(matches!(lorentz_fit(&f, &vec![1.0; f.len()]), Err(Error::FitFailed { .. })));
        assert!(lorentz_fit(&f[..4], &[0.0, 1.0, 2.0, 1.0]).is_err());
    }
}
