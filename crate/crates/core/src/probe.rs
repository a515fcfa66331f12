//! Single-tone reflection probe of the reservoir: `|⟨a_r⟩|` in the steady
//! state of the undriven device plus a coherent tone on the reservoir port.

use std::io::Write;
use std::path::Path;

use faer::{c64, Mat, Side};
use rayon::prelude::*;

use crate::device::{transmon_frequency, DeviceParams, FrameDrive, MaserModel};
use crate::error::{Error, Result};
use crate::fock::TruncationConfig;
use crate::lindblad::{expectation, steady_state};
use crate::spectrum::{lorentz_fit, LorentzFit};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSweep {
    /// Probe frequencies, GHz.
    pub freqs: Vec<f64>,
    /// Probe amplitudes, rad/μs, for `(ε_p/2)(a_r + a_r†)`.
    pub amplitudes: Vec<f64>,
    /// Must stay zero: a simultaneous pump has no static frame.
    pub pump_epsilon: f64,
}

impl ProbeSweep {
    pub fn new(freqs: Vec<f64>, amplitudes: Vec<f64>) -> Self {
        Self { freqs, amplitudes, pump_epsilon: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeMap {
    pub freqs: Vec<f64>,
    pub amplitudes: Vec<f64>,
    /// `values[k][i]` is `|⟨a_r⟩|` at amplitude `k` and frequency `i`.
    pub values: Vec<Vec<f64>>,
}

impl ProbeMap {
    /// Long-format CSV `amplitude,f_ghz,value`.
    pub fn write_csv(&self, path: &Path, header: &[String]) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        for line in header {
            writeln!(file, "# {line}")?;
        }
        writeln!(file, "amplitude,f_ghz,value")?;
        for (amp, row) in self.amplitudes.iter().zip(&self.values) {
            for (f, v) in self.freqs.iter().zip(row) {
                writeln!(file, "{amp:.9},{f:.9},{v:.9e}")?;
            }
        }
        file.flush()?;
        Ok(())
    }

    /// Lorentzian fit of one amplitude slice restricted to `[f_lo, f_hi]`.
    pub fn fit_slice(&self, k: usize, f_lo: f64, f_hi: f64) -> Result<LorentzFit> {
        let (f, v): (Vec<f64>, Vec<f64>) = self
            .freqs
            .iter()
            .zip(&self.values[k])
            .filter(|(f, _)| **f >= f_lo && **f <= f_hi)
            .map(|(f, v)| (*f, *v))
            .unzip();
        lorentz_fit(&f, &v)
    }
}

/// Steady-state `|⟨a_r⟩|` with the transmon at `f_ge` and a reservoir tone.
pub fn response_point(p: &DeviceParams, f_ge: f64, f_probe: f64, eps_p: f64, cfg: &TruncationConfig) -> Result<f64> {
    let drive = FrameDrive { f_frame: f_probe, transmon: 0.0, reservoir: eps_p };
    let model = MaserModel::with_drive(p, f_ge, &drive, cfg)?;
    let rho = steady_state(&model.liouvillian()?)?;
    Ok(expectation(&model.ladders.a_r, &rho)?.norm())
}

pub fn probe_response(p: &DeviceParams, phi_ratio: f64, probe: &ProbeSweep, cfg: &TruncationConfig) -> Result<ProbeMap> {
    if probe.pump_epsilon != 0.0 {
        return Err(Error::Bichromatic);
    }
    let f_ge = transmon_frequency(p.f_ge_max, phi_ratio)?;
    probe_response_at(p, f_ge, probe, cfg)
}

/// As [`probe_response`] with the transmon frequency given directly.
pub fn probe_response_at(p: &DeviceParams, f_ge: f64, probe: &ProbeSweep, cfg: &TruncationConfig) -> Result<ProbeMap> {
    if probe.pump_epsilon != 0.0 {
        return Err(Error::Bichromatic);
    }
    let nf = probe.freqs.len();
    let values: Vec<f64> = (0..probe.amplitudes.len() * nf)
        .into_par_iter()
        .map(|idx| response_point(p, f_ge, probe.freqs[idx % nf], probe.amplitudes[idx / nf], cfg))
        .collect::<Result<_>>()?;
    Ok(ProbeMap {
        freqs: probe.freqs.clone(),
        amplitudes: probe.amplitudes.clone(),
        values: values.chunks(nf.max(1)).map(|c| c.to_vec()).collect(),
    })
}

/// Eigenfrequencies (GHz, ascending) of the one-excitation block spanned by
/// `|e,0,0⟩, |g,1,0⟩, |g,0,1⟩`.
pub fn single_excitation_frequencies(p: &DeviceParams, f_ge: f64) -> Result<[f64; 3]> {
    let (gr, ga) = (p.g_r * 1e-3, p.g_a * 1e-3);
    let rows = [[f_ge, ga, gr], [ga, p.f_a, 0.0], [gr, 0.0, p.f_r]];
    let m = Mat::<c64>::from_fn(3, 3, |i, j| c64::new(rows[i][j], 0.0));
    let ev = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Singular(format!("{e:?}")))?;
    Ok([ev[0], ev[1], ev[2]])
}

/// Interior local maxima above `min_fraction` of the global maximum,
/// as `(frequency, value)` in ascending frequency.
pub fn find_peaks(freqs: &[f64], values: &[f64], min_fraction: f64) -> Vec<(f64, f64)> {
    let vmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = Vec::new();
    for i in 1..values.len().saturating_sub(1) {
        if values[i] > values[i - 1] && values[i] >= values[i + 1] && values[i] >= min_fraction * vmax {
            out.push((freqs[i], values[i]));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluxMap {
    pub phis: Vec<f64>,
    pub freqs: Vec<f64>,
    /// `None` marks flux values outside the tuning model's domain.
    pub values: Vec<Option<Vec<f64>>>,
}

impl FluxMap {
    /// Long-format CSV `phi,f_ghz,value`; out-of-domain rows carry `domain`.
    pub fn write_csv(&self, path: &Path, header: &[String]) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        for line in header {
            writeln!(file, "# {line}")?;
        }
        writeln!(file, "phi,f_ghz,value")?;
        for (phi, row) in self.phis.iter().zip(&self.values) {
            for (i, f) in self.freqs.iter().enumerate() {
                match row {
                    Some(v) => writeln!(file, "{phi:.9},{f:.9},{:.9e}", v[i])?,
                    None => writeln!(file, "{phi:.9},{f:.9},domain")?,
                }
            }
        }
        file.flush()?;
        Ok(())
    }
}

/// `|⟨a_r⟩|` over flux and probe frequency at a fixed probe amplitude.
pub fn flux_sweep_map(p: &DeviceParams, phis: &[f64], freqs: &[f64], eps_p: f64, cfg: &TruncationConfig) -> Result<FluxMap> {
    let values = phis
        .iter()
        .map(|&phi| match transmon_frequency(p.f_ge_max, phi) {
            Err(Error::Domain(_)) => Ok(None),
            Err(e) => Err(e),
            Ok(f_ge) => {
                let sweep = ProbeSweep::new(freqs.to_vec(), vec![eps_p]);
                Ok(Some(probe_response_at(p, f_ge, &sweep, cfg)?.values.remove(0)))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FluxMap { phis: phis.to_vec(), freqs: freqs.to_vec(), values })
}
