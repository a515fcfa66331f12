use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use maser_core::analytics::analytics_report;
use maser_core::calibration::build_chain;
use maser_core::config::Config;
use maser_core::device::{MaserModel, MHZ};
use maser_core::lindblad::{expectation, steady_state_with, SteadyStateMethod};
use maser_core::probe::{find_peaks, flux_sweep_map, probe_response_at, single_excitation_frequencies, ProbeSweep};
use maser_core::spectrum::{bare_cavity_reference, emission_spectrum, emitted_power, schawlow_townes_fwhm, SpectrumOptions};
use maser_core::sweep::{failures, point_truncation, run_sweep, write_sweep_csv, SweepSpec};
use maser_core::{Error, Slot};

#[derive(Parser)]
#[command(name = "maser", version, about = "Steady states, emission spectra and calibration of a single-atom maser")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; defaults apply to anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set drive.epsilon_rad_per_us=360`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (overrides run.threads).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep one parameter and record N_ss (and optionally the emission line).
    Sweep,
    /// Emission spectrum at the operating point.
    Spectrum {
        /// Compute the thermal bare-cavity reference with this occupation instead.
        #[arg(long, value_name = "N_TH")]
        bare_cavity: Option<f64>,
    },
    /// Effective decay rates and photon-number estimates of the reduced model.
    Analytics,
    /// Single-tone reservoir probe at the operating point, or over flux.
    Probe,
    /// Attenuation and gain of the measurement chain from the anchor record.
    Calibrate,
    /// Write a matplotlib script that plots the CSV files in the output directory.
    PlotScript,
}

enum Failure {
    Run(Error),
    /// Some sweep points failed; their rows carry the errors.
    Points(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Points(list)) => {
            eprintln!("{} sweep point(s) failed:", list.len());
            for l in list {
                eprintln!("  {l}");
            }
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut overrides = cli.common.set.clone();
    if let Some(t) = cli.common.threads {
        overrides.push(format!("run.threads={t}"));
    }
    let cfg = Config::load(cli.common.config.as_deref(), &overrides)?;
    if cfg.run.threads > 0 {
        // probe maps use the global pool; sweeps build their own
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let out = cli.common.out;
    fs::create_dir_all(&out)?;
    let header = cfg.echo()?;
    match cli.command {
        Command::Sweep => sweep(&cfg, &out, &header),
        Command::Spectrum { bare_cavity } => spectrum(&cfg, &out, &header, bare_cavity),
        Command::Analytics => analytics(&cfg, &out, &header),
        Command::Probe => probe(&cfg, &out, &header),
        Command::Calibrate => calibrate(&cfg, &out, &header),
        Command::PlotScript => plot_script(&out),
    }
}

fn sweep(cfg: &Config, out: &Path, header: &[String]) -> Result<(), Failure> {
    let spec = SweepSpec::from_config(cfg)?;
    let records = run_sweep(&spec)?;
    let path = out.join("sweep.csv");
    write_sweep_csv(&records, spec.variable, &path, header)?;
    for (i, r) in records.iter().enumerate() {
        if let Some(s) = &r.spectrum {
            let mut h = header.to_vec();
            h.push(format!("sweep point {i}: value = {:.9}", r.value));
            s.write_csv(&out.join(format!("spectrum_{i:03}.csv")), &h)?;
        }
    }
    println!("wrote {} ({} points)", path.display(), records.len());
    let failed = failures(&records);
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Points(failed.iter().map(|(v, e)| format!("{v}: {e}")).collect()))
    }
}

fn spectrum(cfg: &Config, out: &Path, header: &[String], bare_nth: Option<f64>) -> Result<(), Failure> {
    let p = &cfg.device;
    let f_line = p.f_r;
    let grid = cfg.spectrum.grid(f_line);
    let mut h = header.to_vec();
    let result = match bare_nth {
        Some(n_th) => {
            let cav = bare_cavity_reference(p.kappa_r, n_th, 0.0, cfg.truncation.n_r)?;
            let opts = SpectrumOptions { krylov_dim: cfg.spectrum.krylov_dim, fit: cfg.spectrum.fit, ..SpectrumOptions::around(f_line, f_line) };
            h.push(format!("bare cavity, n_th = {n_th}, frame at f_r"));
            emission_spectrum(&cav.generator, &cav.a, &cav.rho_ss, &grid, &opts)?
        }
        None => {
            let drive = cfg.resolved_drive();
            let f_ge = cfg.f_ge()?;
            let tcfg = point_truncation(p, f_ge, &drive, &cfg.truncation)?;
            let model = MaserModel::pumped(p, f_ge, &drive, &tcfg)?;
            let l = model.liouvillian()?;
            let ss = steady_state_with(&l, SteadyStateMethod::Auto)?;
            h.push(format!("truncation n_t={} n_a={} n_r={}, steady-state residual {:.3e}", tcfg.n_t, tcfg.n_a, tcfg.n_r, ss.relative_residual()));
            emission_spectrum(&l, &model.ladders.a_r, &ss.rho, &grid, &cfg.spectrum.options(f_line, drive.f_p))?
        }
    };
    let kappa_khz = p.kappa_r / (2.0 * PI) * 1e3;
    h.push(format!("kappa_r/2pi = {kappa_khz:.6} kHz"));
    if result.n_ss > 0.0 {
        h.push(format!("schawlow_townes_khz = {:.6}", schawlow_townes_fwhm(p.kappa_r, result.n_ss)?));
        h.push(format!("emitted_power_w = {:.6e}", emitted_power(p.kappa_r_e, result.n_ss, f_line)));
    }
    let path = out.join("spectrum.csv");
    result.write_csv(&path, &h)?;
    println!("wrote {}", path.display());
    println!("n_ss = {:.6}, integral = {:.6}, coherent = {:.3e}", result.n_ss, result.integral, result.coherent);
    match (result.center, result.fwhm) {
        (Some(c), Some(w)) => println!("center = {c:.9} GHz, fwhm = {w:.3} kHz (kappa_r/2pi = {kappa_khz:.3} kHz)"),
        _ if result.is_empty() => println!("empty spectrum: no incoherent emission"),
        _ => println!("line fit unavailable"),
    }
    Ok(())
}

fn analytics(cfg: &Config, out: &Path, header: &[String]) -> Result<(), Failure> {
    let a = &cfg.analytics;
    let report = analytics_report(&a.params(), cfg.device.kappa_r, MHZ * cfg.device.g_r, a.omega_2ph_per_us)?;
    let path = out.join("analytics.csv");
    let body = report.to_csv();
    fs::write(&path, with_header(header, &body))?;
    print!("{body}");
    Ok(())
}

fn probe(cfg: &Config, out: &Path, header: &[String]) -> Result<(), Failure> {
    let p = &cfg.device;
    let pr = &cfg.probe;
    let tcfg = cfg.truncation.base()?;
    let freqs = pr.freqs();
    let pump = cfg.resolved_drive().epsilon;
    if pr.phi_points > 0 {
        if pump != 0.0 {
            return Err(Error::Bichromatic.into());
        }
        let amp = pr.amplitudes.first().copied().unwrap_or(0.01);
        let map = flux_sweep_map(p, &pr.phis(), &freqs, amp, &tcfg)?;
        let path = out.join("flux_map.csv");
        map.write_csv(&path, header)?;
        println!("wrote {}", path.display());
        return Ok(());
    }
    let f_ge = cfg.f_ge()?;
    let sweep = ProbeSweep { freqs: freqs.clone(), amplitudes: pr.amplitudes.clone(), pump_epsilon: pump };
    let map = probe_response_at(p, f_ge, &sweep, &tcfg)?;
    let path = out.join("probe.csv");
    map.write_csv(&path, header)?;
    println!("wrote {}", path.display());
    let ev = single_excitation_frequencies(p, f_ge)?;
    println!("single-excitation frequencies: {:.6} {:.6} {:.6} GHz", ev[0], ev[1], ev[2]);
    for (amp, row) in map.amplitudes.iter().zip(&map.values) {
        let peaks: Vec<String> = find_peaks(&map.freqs, row, 0.1).iter().map(|(f, _)| format!("{f:.6}")).collect();
        println!("amplitude {amp}: peaks at [{}] GHz", peaks.join(", "));
    }
    Ok(())
}

fn calibrate(cfg: &Config, out: &Path, header: &[String]) -> Result<(), Failure> {
    let chain = build_chain(&cfg.calibration.anchor)?;
    let map = cfg.calibration.drive_map;
    let mut body = String::from("quantity,value\n");
    body += &format!("line_attenuation_db,{:.6}\n", chain.line_attenuation_db);
    body += &format!("output_gain_db,{:.6}\n", chain.output_gain_db);
    body += &format!("p_vna_dbm,{:.6}\n", cfg.calibration.anchor.p_vna_dbm());
    body += &format!("drive_map_eps_ref_rad_per_us,{:.6}\n", map.eps_ref);
    body += &format!("drive_map_p_ref_dbm,{:.6}\n", map.p_ref_dbm);
    let drive = cfg.resolved_drive();
    if drive.epsilon > 0.0 {
        let f_ge = cfg.f_ge()?;
        let tcfg = point_truncation(&cfg.device, f_ge, &drive, &cfg.truncation)?;
        let model = MaserModel::pumped(&cfg.device, f_ge, &drive, &tcfg)?;
        let rho = steady_state_with(&model.liouvillian()?, SteadyStateMethod::Auto)?.rho;
        let n = expectation(&model.ladders.number(Slot::Reservoir), &rho)?.re;
        info!("operating point: N_ss = {n}");
        body += &format!("pump_power_dbm,{:.6}\n", map.power_dbm(drive.epsilon)?);
        body += &format!("n_ss,{n:.6}\n");
        body += &format!("emitted_power_w,{:.6e}\n", emitted_power(cfg.device.kappa_r_e, n, cfg.device.f_r));
    }
    let path = out.join("calibration.csv");
    fs::write(&path, with_header(header, &body))?;
    print!("{body}");
    Ok(())
}

fn with_header(header: &[String], body: &str) -> String {
    let mut s: String = header.iter().map(|l| format!("# {l}\n")).collect();
    s.push_str(body);
    s
}

const PLOT_SCRIPT: &str = r##"#!/usr/bin/env python3
"""Plot the CSV files written by `maser` in this directory."""
import glob
import os

import matplotlib.pyplot as plt
import pandas as pd

here = os.path.dirname(os.path.abspath(__file__))


def load(name):
    return pd.read_csv(os.path.join(here, name), comment="#")


if os.path.exists(os.path.join(here, "sweep.csv")):
    df = load("sweep.csv")
    ax = plt.figure().gca()
    ax.plot(df.iloc[:, 0], df["n_ss"], "o-")
    ax.set_xlabel(df.columns[0])
    ax.set_ylabel("N_ss")
    plt.savefig(os.path.join(here, "sweep.png"), dpi=150)

for path in sorted(glob.glob(os.path.join(here, "spectrum*.csv"))):
    df = pd.read_csv(path, comment="#")
    ax = plt.figure().gca()
    ax.plot(df["freq_ghz"], df["psd"])
    ax.set_xlabel("frequency (GHz)")
    ax.set_ylabel("S (photons/GHz)")
    plt.savefig(path[:-4] + ".png", dpi=150)

for name, key in (("probe.csv", "amplitude"), ("flux_map.csv", "phi")):
    if os.path.exists(os.path.join(here, name)):
        df = load(name)
        df["value"] = pd.to_numeric(df["value"], errors="coerce")
        grid = df.pivot(index="f_ghz", columns=key, values="value")
        ax = plt.figure().gca()
        ax.pcolormesh(grid.columns, grid.index, grid.values, shading="auto")
        ax.set_xlabel(key)
        ax.set_ylabel("probe frequency (GHz)")
        plt.savefig(os.path.join(here, name[:-4] + ".png"), dpi=150)
"##;

fn plot_script(out: &Path) -> Result<(), Failure> {
    let path = out.join("plot.py");
    fs::write(&path, PLOT_SCRIPT)?;
    println!("wrote {}", path.display());
    Ok(())
}
