//! Run configuration: TOML sections with dotted-key overrides and a
//! canonical echo for output headers.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytics::DetunedModelParams;
use crate::calibration::{CalibrationAnchor, DriveMap};
use crate::device::{transmon_frequency, DeviceParams, DriveParams, MHZ};
use crate::error::{Error, Result};
use crate::fock::TruncationConfig;
use crate::lindblad::ConvergenceOptions;
use crate::spectrum::{composite_grid, SpectrumOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub device: DeviceParams,
    pub drive: DriveParams,
    pub operating_point: OperatingPoint,
    pub truncation: TruncationSection,
    pub sweep: SweepSection,
    pub calibration: CalibrationSection,
    pub spectrum: SpectrumSection,
    pub probe: ProbeSection,
    pub analytics: AnalyticsSection,
    pub run: RunSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            device: DeviceParams::measured(),
            drive: DriveParams::default(),
            operating_point: OperatingPoint::default(),
            truncation: TruncationSection::default(),
            sweep: SweepSection::default(),
            calibration: CalibrationSection::default(),
            spectrum: SpectrumSection::default(),
            probe: ProbeSection::default(),
            analytics: AnalyticsSection::default(),
            run: RunSection::default(),
        }
    }
}

/// Transmon frequency, given directly or as a flux ratio. `phi_ratio` wins
/// when both are set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatingPoint {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_ge_ghz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_ratio: Option<f64>,
}

impl Default for OperatingPoint {
    fn default() -> Self {
        Self { f_ge_ghz: Some(5.863), phi_ratio: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationSection {
    pub n_t: usize,
    pub n_a: usize,
    pub n_r: usize,
    /// Grow `n_r`/`n_a` until `N_ss` changes by less than `rel_tol`.
    pub converge: bool,
    pub rel_tol: f64,
    pub n_r_step: usize,
    pub n_r_cap: usize,
    pub n_a_cap: usize,
}

impl Default for TruncationSection {
    fn default() -> Self {
        let c = ConvergenceOptions::default();
        Self { n_t: 3, n_a: 3, n_r: 25, converge: false, rel_tol: c.rel_tol, n_r_step: c.n_r_step, n_r_cap: c.n_r_cap, n_a_cap: c.n_a_cap }
    }
}

impl TruncationSection {
    pub fn base(&self) -> Result<TruncationConfig> {
        TruncationConfig::new(self.n_t, self.n_a, self.n_r)
    }

    pub fn ladder(&self) -> ConvergenceOptions {
        ConvergenceOptions { rel_tol: self.rel_tol, n_r_step: self.n_r_step, n_r_cap: self.n_r_cap, n_a_cap: self.n_a_cap, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    PumpAmplitude,
    PumpPowerDbm,
    PumpFrequency,
    FluxRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOutput {
    Nss,
    Spectrum,
    Fwhm,
    Center,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub variable: SweepVariable,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub outputs: Vec<SweepOutput>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { variable: SweepVariable::PumpAmplitude, start: 0.0, stop: 1200.0, points: 31, outputs: vec![SweepOutput::Nss] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub drive_map: DriveMap,
    pub anchor: CalibrationAnchor,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self { drive_map: DriveMap::default(), anchor: CalibrationAnchor::published() }
    }
}

/// Frequency grid and solver settings for emission spectra. The grid is a
/// coarse span around `center_ghz` (default `f_r`) plus a fine span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center_ghz: Option<f64>,
    pub span_mhz: f64,
    pub points: usize,
    pub fine_span_mhz: f64,
    pub fine_points: usize,
    pub krylov_dim: usize,
    pub fit: bool,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { center_ghz: None, span_mhz: 2000.0, points: 2001, fine_span_mhz: 10.0, fine_points: 1001, krylov_dim: 24, fit: true }
    }
}

impl SpectrumSection {
    pub fn grid(&self, f_line: f64) -> Vec<f64> {
        let c = self.center_ghz.unwrap_or(f_line);
        let (h, hf) = (0.5e-3 * self.span_mhz, 0.5e-3 * self.fine_span_mhz);
        composite_grid(&[(c - h, c + h, self.points), (c - hf, c + hf, self.fine_points)])
    }

    pub fn options(&self, f_line: f64, f_frame: f64) -> SpectrumOptions {
        SpectrumOptions { krylov_dim: self.krylov_dim, fit: self.fit, ..SpectrumOptions::around(self.center_ghz.unwrap_or(f_line), f_frame) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub f_start_ghz: f64,
    pub f_stop_ghz: f64,
    pub f_points: usize,
    /// Probe amplitudes, rad/μs.
    pub amplitudes: Vec<f64>,
    /// Flux grid for the avoided-crossing map; empty means a single map at
    /// the operating point.
    pub phi_start: f64,
    pub phi_stop: f64,
    pub phi_points: usize,
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            f_start_ghz: 5.83,
            f_stop_ghz: 5.89,
            f_points: 241,
            amplitudes: vec![0.01],
            phi_start: 0.0,
            phi_stop: 0.0,
            phi_points: 0,
        }
    }
}

impl ProbeSection {
    pub fn freqs(&self) -> Vec<f64> {
        linspace(self.f_start_ghz, self.f_stop_ghz, self.f_points)
    }

    pub fn phis(&self) -> Vec<f64> {
        linspace(self.phi_start, self.phi_stop, self.phi_points)
    }
}

/// Reduced ef/aux model used by the analytic report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsSection {
    /// Effective coupling `√2·g_a`, MHz.
    pub g_mhz: f64,
    pub kappa_a_per_us: f64,
    pub delta_mhz: f64,
    pub gamma_tilde_per_us: f64,
    /// Two-photon Rabi frequency, μs⁻¹; only used for the strong-pump flag.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_2ph_per_us: Option<f64>,
}

impl Default for AnalyticsSection {
    fn default() -> Self {
        Self { g_mhz: 21.9, kappa_a_per_us: 90.0, delta_mhz: 35.0, gamma_tilde_per_us: 1.0, omega_2ph_per_us: None }
    }
}

impl AnalyticsSection {
    pub fn params(&self) -> DetunedModelParams {
        DetunedModelParams { g: MHZ * self.g_mhz, kappa_a: self.kappa_a_per_us, delta: MHZ * self.delta_mhz, gamma_tilde: self.gamma_tilde_per_us }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Worker threads; 0 uses all available cores.
    pub threads: usize,
}

impl Config {
    /// Parses TOML text and applies `section.key=value` overrides on top.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Config = toml::Value::Table(table).try_into().map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or starts from defaults) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.drive.validate()?;
        self.truncation.base()?;
        if self.sweep.points < 2 {
            return Err(Error::Config(format!("sweep.points = {} must be >= 2", self.sweep.points)));
        }
        if !(self.sweep.start.is_finite() && self.sweep.stop.is_finite()) || self.sweep.start == self.sweep.stop {
            return Err(Error::Config("sweep grid must have distinct finite endpoints".into()));
        }
        if self.spectrum.points < 2 || self.spectrum.fine_points < 2 || self.spectrum.krylov_dim == 0 {
            return Err(Error::Config("spectrum grid needs >= 2 points per segment and krylov_dim > 0".into()));
        }
        Ok(())
    }

    /// Transmon frequency at the operating point, GHz.
    pub fn f_ge(&self) -> Result<f64> {
        match (self.operating_point.f_ge_ghz, self.operating_point.phi_ratio) {
            (_, Some(phi)) => transmon_frequency(self.device.f_ge_max, phi),
            (Some(f), None) => Ok(f),
            (None, None) => Err(Error::Config("operating_point needs f_ge_ghz or phi_ratio".into())),
        }
    }

    /// Pump drive with any `power_dbm` converted to an amplitude.
    pub fn resolved_drive(&self) -> DriveParams {
        self.calibration.drive_map.resolve(&self.drive)
    }

    /// The configuration as TOML, one `# `-prefixed line per line, for
    /// embedding in output files.
    pub fn echo(&self) -> Result<Vec<String>> {
        let text = toml::to_string(self).map_err(|e| Error::Config(format!("{e}")))?;
        Ok(text.lines().filter(|l| !l.is_empty()).map(str::to_string).collect())
    }
}

/// `section.key=value`; the value is read as a TOML value, falling back to a
/// plain string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("override '{spec}' has an empty key")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = keys.split_last().expect("non-empty");
    let mut cur = table;
    for k in parents {
        let entry = cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::Config(format!("override '{spec}': '{k}' is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(Config::from_toml_with_overrides("", &[]).unwrap(), Config::default());
    }

    #[test]
    fn overrides_win_over_file() {
        let text = "[drive]\nf_p_ghz = 5.7\nepsilon_rad_per_us = 10.0\n";
        let cfg = Config::from_toml_with_overrides(text, &["drive.epsilon_rad_per_us=20".into(), "sweep.variable=flux_ratio".into()]).unwrap();
        assert_eq!(cfg.drive.f_p, 5.7);
        assert_eq!(cfg.drive.epsilon, 20.0);
        assert_eq!(cfg.sweep.variable, SweepVariable::FluxRatio);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml_with_overrides("", &["device.f_q_ghz=5".into()]).is_err());
        assert!(Config::from_toml_with_overrides("[nope]\nx = 1\n", &[]).is_err());
        assert!(Config::from_toml_with_overrides("", &["sweep.points".into()]).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let cfg = Config::from_toml_with_overrides("", &["operating_point.phi_ratio=0.05".into(), "run.threads=2".into()]).unwrap();
        let back = Config::from_toml_with_overrides(&cfg.echo().unwrap().join("\n"), &[]).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn operating_point_resolution() {
        let mut cfg = Config::default();
        assert_eq!(cfg.f_ge().unwrap(), 5.863);
        cfg.operating_point.phi_ratio = Some(0.0);
        assert_eq!(cfg.f_ge().unwrap(), cfg.device.f_ge_max);
        cfg.operating_point = OperatingPoint { f_ge_ghz: None, phi_ratio: None };
        assert!(cfg.f_ge().is_err());
    }

    #[test]
    fn power_drive_is_mapped() {
        let cfg = Config::from_toml_with_overrides("", &["drive.power_dbm=-10".into()]).unwrap();
        assert_eq!(cfg.resolved_drive().epsilon, cfg.calibration.drive_map.eps_ref);
    }
}
