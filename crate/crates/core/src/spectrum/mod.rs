//! Reservoir emission spectrum from the quantum regression theorem.
//!
//! The incoherent correlation `g(τ) = Tr[a† e^{Lτ} x]`, with
//! `x = aρ_ss − ⟨a⟩ρ_ss`, is expanded as a finite sum of damped exponentials
//! `Σ r_j e^{μ_j τ}`. The modes come from a shift-and-invert (rational)
//! Krylov space of `L` seeded with `x`, so the one-sided transform
//!
//! ```text
//! S(ω) = 2 Re ∫₀^∞ g(τ) e^{−iωτ} dτ = 2 Re Σ_j r_j / (iω − μ_j)
//! ```
//!
//! is evaluated in closed form on any frequency grid. The coherent part
//! `|⟨a⟩|²` is a delta at the frame frequency and is reported separately.
//! Densities are in photons per GHz of cyclic frequency, so that
//! `∫ psd df + |⟨a⟩|² = ⟨a†a⟩`.

mod fit;

pub use fit::{lorentz_fit, lorentzian, LorentzFit};

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use faer::{c64, Mat, MatRef};
use log::debug;

use crate::device::GHZ;
use crate::error::{Error, Result};
use crate::fock::{annihilation, Operator};
use crate::lindblad::steady::EigenPreconditioner;
use crate::lindblad::{expectation, liouvillian, steady_state, DensityMatrix, Superoperator};
use crate::linalg::{self, gmres, GmresOptions, ZERO};

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;

#[derive(Debug, Clone)]
pub struct SpectrumOptions {
    /// Frame (pump) frequency in GHz added back to report lab frequencies.
    pub f_frame: f64,
    /// Shift locations in lab GHz; cycled while building the Krylov space.
    /// Place them on and around the expected line.
    pub poles: Vec<f64>,
    /// Real part of the shifts, μs⁻¹.
    pub pole_damping: f64,
    pub krylov_dim: usize,
    /// `g(τ)` must fall below this fraction of `g(0)` inside the window.
    pub window_ratio: f64,
    /// Longest correlation window tried, μs.
    pub max_window: f64,
    /// Fit a Lorentzian to the main line.
    pub fit: bool,
}

impl SpectrumOptions {
    /// Shifts spread around an expected line at `f_line` (lab GHz).
    pub fn around(f_line: f64, f_frame: f64) -> Self {
        let offsets_mhz = [0.0, 1.5, -1.5, 3.0, -30.0, 30.0];
        Self {
            f_frame,
            poles: offsets_mhz.iter().map(|o| f_line + o * 1e-3).collect(),
            pole_damping: 0.5,
            krylov_dim: 24,
            window_ratio: 1e-3,
            max_window: 5e3,
            fit: true,
        }
    }
}

/// One damped exponential `r e^{μτ}` of the correlation function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralMode {
    /// μ in μs⁻¹ (rotating frame).
    pub rate: c64,
    pub residue: c64,
}

#[derive(Debug, Clone)]
pub struct SpectrumResult {
    /// Lab frequencies, GHz.
    pub freqs: Vec<f64>,
    /// Photons per GHz.
    pub psd: Vec<f64>,
    /// Fitted line center, lab GHz.
    pub center: Option<f64>,
    /// Fitted line FWHM, kHz.
    pub fwhm: Option<f64>,
    pub fit: Option<LorentzFit>,
    /// Trapezoid integral of `psd` over the grid plus the coherent weight.
    pub integral: f64,
    /// `⟨a†a⟩` in the steady state.
    pub n_ss: f64,
    /// `|⟨a⟩|²`.
    pub coherent: f64,
    /// Window in which `|g(τ)|` decayed below the requested ratio, μs.
    pub tau_window: f64,
    pub modes: Vec<SpectralMode>,
    pub f_frame: f64,
}

impl SpectrumResult {
    /// No incoherent emission at all.
    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Incoherent correlation `g(τ)` from the mode expansion.
    pub fn correlation(&self, tau: f64) -> c64 {
        self.modes.iter().map(|m| m.residue * (m.rate * tau).exp()).sum()
    }

    /// Spectral density at a lab frequency (photons per GHz).
    pub fn density(&self, f: f64) -> f64 {
        density(&self.modes, f - self.f_frame)
    }

    /// Writes `freq_ghz,psd` rows, preceded by `header` comment lines and
    /// followed by the fit results as comment lines.
    pub fn write_csv(&self, path: &Path, header: &[String]) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        for line in header {
            writeln!(file, "# {line}")?;
        }
        {
            let mut w = csv::Writer::from_writer(&mut file);
            w.write_record(["freq_ghz", "psd"])?;
            for (f, s) in self.freqs.iter().zip(&self.psd) {
                w.write_record([format!("{f:.9}"), format!("{s:.9e}")])?;
            }
            w.flush()?;
        }
        writeln!(file, "# n_ss={:.9}", self.n_ss)?;
        writeln!(file, "# coherent={:.9}", self.coherent)?;
        writeln!(file, "# integral={:.9}", self.integral)?;
        match &self.fit {
            Some(fit) => {
                writeln!(file, "# center_ghz={:.9}", fit.center)?;
                writeln!(file, "# fwhm_khz={:.6}", fit.fwhm)?;
                writeln!(file, "# amplitude={:.9e}", fit.amplitude)?;
                writeln!(file, "# offset={:.9e}", fit.offset)?;
                writeln!(file, "# rms_residual={:.6e}", fit.rms_residual)?;
            }
            None if self.is_empty() => writeln!(file, "# empty spectrum: no incoherent emission")?,
            None => writeln!(file, "# fit unavailable")?,
        }
        file.flush()?;
        Ok(())
    }
}

fn density(modes: &[SpectralMode], f_frame_ghz: f64) -> f64 {
    let w = c64::new(0.0, GHZ * f_frame_ghz);
    // S(ω) dω/2π  →  per GHz: factor 1e3
    modes.iter().map(|m| 2.0 * (m.residue / (w - m.rate)).re).sum::<f64>() * 1e3
}

/// Emission spectrum of the mode `a` on the lab-frequency grid `freqs` (GHz).
pub fn emission_spectrum(
    l: &Superoperator,
    a: &Operator,
    rho_ss: &DensityMatrix,
    freqs: &[f64],
    opts: &SpectrumOptions,
) -> Result<SpectrumResult> {
    let d = l.dim();
    if a.nrows() != d || rho_ss.dim() != d {
        return Err(Error::Dimension(format!("operator {} / state {} vs generator {d}", a.nrows(), rho_ss.dim())));
    }
    let n_ss = expectation(&a.adjoint().matmul(a), rho_ss)?.re;
    let mean_a = expectation(a, rho_ss)?;
    let coherent = mean_a.norm_sqr();

    let mut x = a.mul_dense(rho_ss.as_ref());
    linalg::axpy(&mut x, -mean_a, rho_ss.as_ref());
    let a_adj = a.adjoint();

    let modes = if linalg::fro_norm(x.as_ref()) <= 1e-12 * (1.0 + n_ss) {
        Vec::new()
    } else {
        krylov_modes(l, &a_adj, x.as_ref(), opts)?
    };
    let tau_window = if modes.is_empty() { 0.0 } else { decay_window(&modes, opts)? };

    let psd: Vec<f64> = freqs.iter().map(|&f| density(&modes, f - opts.f_frame)).collect();
    let integral = trapezoid(freqs, &psd) + coherent;

    let fit = if opts.fit && !modes.is_empty() { fit_main_line(&modes, freqs, &psd, opts).ok() } else { None };
    Ok(SpectrumResult {
        freqs: freqs.to_vec(),
        psd,
        center: fit.map(|f| f.center),
        fwhm: fit.map(|f| f.fwhm),
        fit,
        integral,
        n_ss,
        coherent,
        tau_window,
        modes,
        f_frame: opts.f_frame,
    })
}

/// Solves `(L − σ) z = v` with GMRES, preconditioned by `(S − σ)⁻¹`.
fn shifted_solve(l: &Superoperator, pre: &EigenPreconditioner, v: MatRef<'_, c64>, sigma: c64) -> Result<Mat<c64>> {
    let op = |z: MatRef<'_, c64>| pre.apply_shifted(l, z, sigma);
    let rhs = pre.apply(v, sigma);
    let opts = GmresOptions { tol: 1e-10, ..GmresOptions::default() };
    let (z, stats) = gmres(op, rhs.as_ref(), None, opts)?;
    if stats.relative_residual > 1e-8 {
        return Err(Error::NoConvergence { iterations: stats.iterations, residual: stats.relative_residual });
    }
    Ok(z)
}

fn krylov_modes(l: &Superoperator, a_adj: &Operator, x: MatRef<'_, c64>, opts: &SpectrumOptions) -> Result<Vec<SpectralMode>> {
    let d = l.dim();
    let pre = EigenPreconditioner::new(l)?;
    let poles: Vec<c64> = if opts.poles.is_empty() {
        vec![c64::new(-opts.pole_damping, 0.0)]
    } else {
        opts.poles.iter().map(|f| c64::new(-opts.pole_damping, GHZ * (f - opts.f_frame))).collect()
    };
    let m = opts.krylov_dim.min(d * d - 1).max(1);

    let xn = linalg::fro_norm(x);
    let mut basis = vec![linalg::scaled(x, c64::new(1.0 / xn, 0.0))];
    for k in 0..m {
        let mut z = shifted_solve(l, &pre, basis.last().unwrap().as_ref(), poles[k % poles.len()])?;
        for _ in 0..2 {
            for w in &basis {
                let h = linalg::dot(w.as_ref(), z.as_ref());
                linalg::axpy(&mut z, -h, w.as_ref());
            }
        }
        let zn = linalg::fro_norm(z.as_ref());
        if zn < 1e-12 {
            break;
        }
        basis.push(linalg::scaled(z.as_ref(), c64::new(1.0 / zn, 0.0)));
    }

    let n = basis.len();
    let images: Vec<Mat<c64>> = basis.iter().map(|w| l.apply(w.as_ref())).collect();
    let lm = Mat::<c64>::from_fn(n, n, |i, j| linalg::dot(basis[i].as_ref(), images[j].as_ref()));
    let eig = lm.eigen().map_err(|e| Error::Singular(format!("projected generator: {e:?}")))?;
    let y = eig.U().to_owned();
    let mu: Vec<c64> = eig.S().column_vector().iter().copied().collect();
    let y_inv = {
        use faer::linalg::solvers::DenseSolveCore;
        y.partial_piv_lu().inverse()
    };
    // coordinates of x and of the functional Tr[a† ·] in the basis
    let xm: Vec<c64> = basis.iter().map(|w| linalg::dot(w.as_ref(), x)).collect();
    let tv: Vec<c64> = basis.iter().map(|w| trace_product(a_adj, w.as_ref())).collect();

    let mut modes = Vec::with_capacity(n);
    for j in 0..n {
        let left: c64 = (0..n).map(|i| tv[i] * y[(i, j)]).sum();
        let right: c64 = (0..n).map(|i| y_inv[(j, i)] * xm[i]).sum();
        modes.push(SpectralMode { rate: mu[j], residue: left * right });
    }
    let total: f64 = modes.iter().map(|m| m.residue.norm()).sum();
    modes.retain(|m| m.residue.norm() > 1e-13 * total);
    if let Some(bad) = modes.iter().find(|m| m.rate.re >= -1e-9 && m.residue.norm() > 1e-8 * total) {
        return Err(Error::Singular(format!("projected generator has a non-decaying mode {:?}", bad.rate)));
    }
    debug!("spectrum: {} Krylov vectors, {} modes, slowest decay {:.4}", n, modes.len(), modes.iter().map(|m| -m.rate.re).fold(f64::INFINITY, f64::min));
    Ok(modes)
}

/// `Tr[A·M]` for sparse `A`.
fn trace_product(a: &Operator, m: MatRef<'_, c64>) -> c64 {
    let mut s = ZERO;
    for (i, k, v) in a.iter() {
        s += v * m[(k, i)];
    }
    s
}

/// Smallest window (doubling from the slowest decay time) in which `|g|`
/// falls below `window_ratio·|g(0)|` and stays there.
fn decay_window(modes: &[SpectralMode], opts: &SpectrumOptions) -> Result<f64> {
    let g = |t: f64| modes.iter().map(|m| m.residue * (m.rate * t).exp()).sum::<c64>().norm();
    let g0 = g(0.0);
    if g0 == 0.0 {
        return Ok(0.0);
    }
    let slowest = modes.iter().map(|m| -m.rate.re).fold(f64::INFINITY, f64::min);
    // every mode decays at least this fast, so the envelope bounds |g| beyond t
    let envelope = |t: f64| modes.iter().map(|m| m.residue.norm() * (m.rate.re * t).exp()).sum::<f64>();
    let mut t = 1.0 / slowest;
    while t <= opts.max_window {
        if envelope(t) <= opts.window_ratio * g0 {
            return Ok(t);
        }
        t *= 2.0;
    }
    let t = opts.max_window;
    Err(Error::WindowTooShort { ratio: g(t) / g0, tau_max: t })
}

fn fit_main_line(modes: &[SpectralMode], freqs: &[f64], psd: &[f64], opts: &SpectrumOptions) -> Result<LorentzFit> {
    // candidate peak: largest density among the grid and the mode frequencies
    let mut best = (f64::NEG_INFINITY, 0.0);
    for (f, s) in freqs.iter().zip(psd) {
        if *s > best.0 {
            best = (*s, *f);
        }
    }
    for m in modes {
        let f = opts.f_frame + m.rate.im / GHZ;
        let s = density(modes, m.rate.im / GHZ);
        if s > best.0 {
            best = (s, f);
        }
    }
    let (peak, f0) = best;
    // local half width from the densest mode near the peak
    let w_est = modes
        .iter()
        .filter(|m| ((opts.f_frame + m.rate.im / GHZ) - f0).abs() < 5e-3)
        .map(|m| -m.rate.re / PI * 1e-3)
        .fold(f64::INFINITY, f64::min);
    let w_est = if w_est.is_finite() { w_est.max(1e-6) } else { 1e-3 };
    let half = refine_half_width(modes, f0, peak, w_est, opts.f_frame);
    let span = 4.0 * half;
    let fine: Vec<f64> = (0..=800).map(|i| f0 - span + 2.0 * span * i as f64 / 800.0).collect();
    let vals: Vec<f64> = fine.iter().map(|&f| density(modes, f - opts.f_frame)).collect();
    lorentz_fit(&fine, &vals)
}

/// Distance from `f0` to the nearest half-maximum point, searched outward.
fn refine_half_width(modes: &[SpectralMode], f0: f64, peak: f64, w_est: f64, f_frame: f64) -> f64 {
    let s = |f: f64| density(modes, f - f_frame);
    let mut out = f64::INFINITY;
    for dir in [-1.0, 1.0] {
        let mut step = w_est / 20.0;
        let mut d = 0.0;
        for _ in 0..200 {
            d += step;
            if s(f0 + dir * d) < peak / 2.0 {
                out = out.min(d);
                break;
            }
            step *= 1.1;
        }
    }
    if out.is_finite() {
        out
    } else {
        w_est
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1])).sum()
}

/// Schawlow-Townes linewidth `κ_r/(2π N_ss)` in kHz.
pub fn schawlow_townes_fwhm(kappa_r: f64, n_ss: f64) -> Result<f64> {
    if !(n_ss > 0.0) {
        return Err(Error::InvalidParameter(format!("n_ss = {n_ss} must be > 0")));
    }
    Ok(kappa_r / (2.0 * PI * n_ss) * 1e3)
}

/// Power leaving through the coupling port, `κ_e·N·h·f`, in W.
pub fn emitted_power(kappa_r_e: f64, n_ss: f64, f_r: f64) -> f64 {
    kappa_r_e * 1e6 * n_ss * PLANCK * f_r * 1e9
}

/// A single cavity mode of `levels` levels coupled to a bath with mean
/// occupation `n_th`, detuned by `detuning` (GHz) from the frame. Its
/// spectrum is a Lorentzian of FWHM `κ/2π` carrying `n_th` photons.
#[derive(Debug, Clone)]
pub struct BareCavity {
    pub generator: Superoperator,
    pub a: Operator,
    pub rho_ss: DensityMatrix,
}

pub fn bare_cavity_reference(kappa: f64, n_th: f64, detuning: f64, levels: usize) -> Result<BareCavity> {
    if !(kappa > 0.0) || !(n_th >= 0.0) {
        return Err(Error::InvalidParameter("kappa must be > 0 and n_th >= 0".into()));
    }
    let a = annihilation(levels)?;
    let h = &a.adjoint().matmul(&a) * (GHZ * detuning);
    let mut c = vec![&a * (kappa * (n_th + 1.0)).sqrt()];
    if n_th > 0.0 {
        c.push(&a.adjoint() * (kappa * n_th).sqrt());
    }
    let generator = liouvillian(&h, &c)?;
    let rho_ss = steady_state(&generator)?;
    Ok(BareCavity { generator, a, rho_ss })
}

/// Concatenation of uniform segments `(start, stop, points)` with duplicates
/// at the joints removed; handy for a fine grid around a line inside a wide
/// coarse one.
pub fn composite_grid(segments: &[(f64, f64, usize)]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &(a, b, n) in segments {
        for i in 0..n {
            let f = if n == 1 { a } else { a + (b - a) * i as f64 / (n - 1) as f64 };
            out.push(f);
        }
    }
    out.sort_by(|a, b| a.total_cmp(b));
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    out
}
