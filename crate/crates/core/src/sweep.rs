//! Parameter sweeps of the pumped device.

use std::io::Write;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;

use crate::calibration::DriveMap;
use crate::config::{linspace, Config, SpectrumSection, SweepOutput, SweepVariable, TruncationSection};
use crate::device::{transmon_frequency, DeviceParams, DriveParams, MaserModel};
use crate::error::{Error, Result};
use crate::fock::{Slot, TruncationConfig};
use crate::lindblad::{converge_truncation, expectation, steady_state_with, SteadyStateMethod};
use crate::spectrum::{emission_spectrum, SpectrumResult};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub outputs: Vec<SweepOutput>,
    pub device: DeviceParams,
    /// Values not swept are taken from here.
    pub drive: DriveParams,
    /// Transmon frequency when flux is not swept, GHz.
    pub f_ge: f64,
    pub truncation: TruncationSection,
    pub spectrum: SpectrumSection,
    pub drive_map: DriveMap,
    /// 0 uses all available cores.
    pub threads: usize,
}

impl SweepSpec {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let s = &cfg.sweep;
        // flux sweeps do not need a valid fixed operating point
        let f_ge = match s.variable {
            SweepVariable::FluxRatio => cfg.f_ge().unwrap_or(cfg.device.f_ge_max),
            _ => cfg.f_ge()?,
        };
        let spec = Self {
            variable: s.variable,
            start: s.start,
            stop: s.stop,
            points: s.points,
            outputs: s.outputs.clone(),
            device: cfg.device,
            drive: cfg.resolved_drive(),
            f_ge,
            truncation: cfg.truncation,
            spectrum: cfg.spectrum.clone(),
            drive_map: cfg.calibration.drive_map,
            threads: cfg.run.threads,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(Error::Config(format!("sweep needs >= 2 points, got {}", self.points)));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) || self.start == self.stop {
            return Err(Error::Config("sweep grid must have distinct finite endpoints".into()));
        }
        self.device.validate()?;
        self.truncation.base()?;
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        linspace(self.start, self.stop, self.points)
    }

    fn wants_spectrum(&self) -> bool {
        self.outputs.iter().any(|o| matches!(o, SweepOutput::Spectrum | SweepOutput::Fwhm | SweepOutput::Center))
    }

    /// Pump and transmon frequency at one grid value.
    pub fn point(&self, value: f64) -> Result<(DriveParams, f64)> {
        let mut drive = DriveParams { power_dbm: None, ..self.drive };
        let mut f_ge = self.f_ge;
        match self.variable {
            SweepVariable::PumpAmplitude => drive.epsilon = value,
            SweepVariable::PumpPowerDbm => drive.epsilon = self.drive_map.epsilon(value),
            SweepVariable::PumpFrequency => drive.f_p = value,
            SweepVariable::FluxRatio => f_ge = transmon_frequency(self.device.f_ge_max, value)?,
        }
        drive.validate()?;
        Ok((drive, f_ge))
    }
}

#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub value: f64,
    pub n_ss: Option<f64>,
    pub center_ghz: Option<f64>,
    pub fwhm_khz: Option<f64>,
    pub truncation: Option<TruncationConfig>,
    /// `max |L(ρ)| / ‖L‖∞` of the steady state.
    pub residual: Option<f64>,
    pub error: Option<String>,
    pub spectrum: Option<SpectrumResult>,
}

impl SweepRecord {
    fn failed(value: f64, e: &Error) -> Self {
        Self { value, n_ss: None, center_ghz: None, fwhm_khz: None, truncation: None, residual: None, error: Some(e.to_string()), spectrum: None }
    }
}

/// Truncation for one point: the base configuration, or the ladder result.
pub fn point_truncation(p: &DeviceParams, f_ge: f64, drive: &DriveParams, t: &TruncationSection) -> Result<TruncationConfig> {
    let base = t.base()?;
    if !t.converge {
        return Ok(base);
    }
    let conv = converge_truncation(
        base,
        |cfg| {
            let m = MaserModel::pumped(p, f_ge, drive, cfg)?;
            Ok((m.liouvillian()?, m.ladders.number(Slot::Reservoir)))
        },
        &t.ladder(),
    )?;
    Ok(conv.cfg)
}

pub fn evaluate_point(spec: &SweepSpec, value: f64) -> Result<SweepRecord> {
    let (drive, f_ge) = spec.point(value)?;
    let cfg = point_truncation(&spec.device, f_ge, &drive, &spec.truncation)?;
    let model = MaserModel::pumped(&spec.device, f_ge, &drive, &cfg)?;
    let l = model.liouvillian()?;
    let ss = steady_state_with(&l, SteadyStateMethod::Auto)?;
    let n_ss = expectation(&model.ladders.number(Slot::Reservoir), &ss.rho)?.re;
    let mut rec = SweepRecord {
        value,
        n_ss: Some(n_ss),
        center_ghz: None,
        fwhm_khz: None,
        truncation: Some(cfg),
        residual: Some(ss.relative_residual()),
        error: None,
        spectrum: None,
    };
    if spec.wants_spectrum() {
        let f_line = spec.device.f_r;
        let s = emission_spectrum(&l, &model.ladders.a_r, &ss.rho, &spec.spectrum.grid(f_line), &spec.spectrum.options(f_line, drive.f_p))?;
        rec.center_ghz = s.center;
        rec.fwhm_khz = s.fwhm;
        if spec.outputs.contains(&SweepOutput::Spectrum) {
            rec.spectrum = Some(s);
        }
    }
    Ok(rec)
}

/// Evaluates every grid point in parallel. Records come back in grid order;
/// a failing point yields a record carrying the error instead of aborting.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    spec.validate()?;
    let grid = spec.grid();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let records = pool.install(|| {
        grid.par_iter()
            .map(|&v| match evaluate_point(spec, v) {
                Ok(r) => {
                    info!("sweep {:?} = {v}: N_ss = {:.6}", spec.variable, r.n_ss.unwrap_or(f64::NAN));
                    r
                }
                Err(e) => {
                    warn!("sweep {:?} = {v} failed: {e}", spec.variable);
                    SweepRecord::failed(v, &e)
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(records)
}

pub fn failures(records: &[SweepRecord]) -> Vec<(f64, &str)> {
    records.iter().filter_map(|r| r.error.as_deref().map(|e| (r.value, e))).collect()
}

/// `value,n_ss,center_ghz,fwhm_khz,n_t,n_a,n_r,residual,error` with fixed
/// formatting, preceded by `header` comment lines.
pub fn write_sweep_csv(records: &[SweepRecord], variable: SweepVariable, path: &Path, header: &[String]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for line in header {
        writeln!(file, "# {line}")?;
    }
    {
        let name = serde_plain_name(variable);
        let mut w = csv::Writer::from_writer(&mut file);
        w.write_record([name, "n_ss", "center_ghz", "fwhm_khz", "n_t", "n_a", "n_r", "residual", "error"])?;
        let opt = |v: Option<f64>, digits: usize| v.map(|x| format!("{x:.digits$}")).unwrap_or_default();
        for r in records {
            let (nt, na, nr) = r.truncation.map(|c| (c.n_t.to_string(), c.n_a.to_string(), c.n_r.to_string())).unwrap_or_default();
            w.write_record([
                format!("{:.9}", r.value),
                opt(r.n_ss, 9),
                opt(r.center_ghz, 9),
                opt(r.fwhm_khz, 6),
                nt,
                na,
                nr,
                r.residual.map(|x| format!("{x:.3e}")).unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
    }
    file.flush()?;
    Ok(())
}

fn serde_plain_name(v: SweepVariable) -> &'static str {
    match v {
        SweepVariable::PumpAmplitude => "pump_amplitude",
        SweepVariable::PumpPowerDbm => "pump_power_dbm",
        SweepVariable::PumpFrequency => "pump_frequency",
        SweepVariable::FluxRatio => "flux_ratio",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(variable: SweepVariable, start: f64, stop: f64) -> SweepSpec {
        let mut cfg = Config::default();
        cfg.truncation = TruncationSection { n_t: 3, n_a: 2, n_r: 4, ..Default::default() };
        cfg.sweep.variable = variable;
        cfg.sweep.start = start;
        cfg.sweep.stop = stop;
        cfg.sweep.points = 3;
        cfg.drive.epsilon = 50.0;
        SweepSpec::from_config(&cfg).unwrap()
    }

    #[test]
    fn failures_stay_in_their_row() {
        let spec = small(SweepVariable::FluxRatio, 0.0, 0.8);
        let recs = run_sweep(&spec).unwrap();
        assert_eq!(recs.len(), 3);
        assert!(recs[0].error.is_none() && recs[0].n_ss.is_some());
        assert!(recs[2].error.as_deref().unwrap().contains("domain"), "{:?}", recs[2].error);
        assert_eq!(failures(&recs).len(), 1);
    }

    #[test]
    fn grid_order_is_preserved() {
        let mut spec = small(SweepVariable::PumpAmplitude, 0.0, 100.0);
        spec.threads = 3;
        let recs = run_sweep(&spec).unwrap();
        let values: Vec<f64> = recs.iter().map(|r| r.value).collect();
        assert_eq!(values, vec![0.0, 50.0, 100.0]);
        assert!(recs[0].n_ss.unwrap().abs() < 1e-12);
        assert!(recs.iter().all(|r| r.residual.unwrap() < 1e-10));
    }

    #[test]
    fn power_axis_uses_the_drive_map() {
        let spec = small(SweepVariable::PumpPowerDbm, -20.0, -10.0);
        let (d, _) = spec.point(-10.0).unwrap();
        assert_eq!(d.epsilon, spec.drive_map.eps_ref);
    }
}
