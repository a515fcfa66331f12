//! End-to-end acceptance checks. Runs every criterion, prints one line per
//! criterion and exits nonzero if any of them fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use maser_core::analytics::{gamma_eff_balance, gamma_eff_eigen, gamma_eff_numerical, g_delta_sq, gamma_sq, pumping_rate, simple_nss, DetunedModelParams};
use maser_core::calibration::{build_chain, CalibrationAnchor};
use maser_core::config::{linspace, Config};
use maser_core::device::{DeviceParams, DriveParams, MaserModel, MHZ};
use maser_core::fock::{annihilation, creation};
use maser_core::lindblad::{expectation, liouvillian, null_space_dense, steady_state_with, SteadyStateMethod};
use maser_core::probe::{find_peaks, probe_response_at, ProbeSweep};
use maser_core::spectrum::{bare_cavity_reference, composite_grid, emission_spectrum, schawlow_townes_fwhm, SpectrumOptions};
use maser_core::sweep::{run_sweep, SweepSpec};
use maser_core::{c64, DensityMatrix, Operator, Slot, TruncationConfig};

/// Operating pump frequency `(f_r + f_a)/2`, GHz.
const F_PUMP: f64 = 5.7875;
/// Transmon frequency of the lasing operating point, GHz.
const F_GE: f64 = 5.863;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn round_to(x: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (x * s).round() / s
}

fn closed_form_rates() -> Outcome {
    let p = DetunedModelParams::experimental();
    let (gs, gd) = (gamma_sq(&p), g_delta_sq(&p));
    let rate = gamma_eff_eigen(&p).map(|e| e.rate).unwrap_or(f64::NAN);
    let pass = rel(gs, -61.1e3) <= 0.005 && rel(gd, 30.9e3) <= 0.005 && rel(rate, 16.8) <= 0.03;
    outcome(pass, format!("gamma^2 = {gs:.1}, g_delta^2 = {gd:.1} us^-2, gamma_eff = {rate:.4} us^-1"))
}

fn balance_rate() -> Outcome {
    let rate = gamma_eff_balance(&DetunedModelParams::experimental()).unwrap_or(f64::NAN);
    outcome(rel(rate, 24.6) <= 0.03, format!("gamma_eff = {rate:.4} us^-1"))
}

fn formula_vs_reduced_liouvillian() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut skipped = 0;
    for g in linspace(5.0, 30.0, 10) {
        for kappa_a in linspace(50.0, 150.0, 10) {
            for delta in linspace(5.0, 60.0, 10) {
                let p = DetunedModelParams { g: MHZ * g, kappa_a, delta: MHZ * delta, gamma_tilde: 0.0 };
                match (gamma_eff_eigen(&p), gamma_eff_numerical(&p)) {
                    (Ok(formula), Ok(numeric)) => {
                        worst = worst.max(rel(formula.rate, numeric));
                        checked += 1;
                    }
                    _ => skipped += 1,
                }
            }
        }
    }
    outcome(checked > 0 && worst <= 1e-6, format!("{checked} grid points, {skipped} outside the real-pole branch, worst relative gap {worst:.2e}"))
}

fn simple_population() -> Outcome {
    let rate = pumping_rate(17.0, f64::INFINITY).rate;
    let n = simple_nss(rate, DeviceParams::measured().kappa_r).unwrap_or(f64::NAN);
    outcome(rate == 8.5 && round_to(n, 1) == 24.6, format!("Gamma = {rate} us^-1, N_ss = {n:.4}"))
}

/// Criteria 5 and 6 share one converged pump-amplitude sweep.
fn pump_sweep() -> (Outcome, Outcome) {
    let overrides: Vec<String> = [
        "sweep.variable=\"pump_amplitude\"",
        "sweep.start=0",
        "sweep.stop=1200",
        "sweep.points=31",
        "truncation.n_r=25",
        "truncation.converge=true",
        &format!("drive.f_p_ghz={F_PUMP}"),
        &format!("operating_point.f_ge_ghz={F_GE}"),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let cfg = Config::from_toml_with_overrides("", &overrides).expect("valid config");
    let records = run_sweep(&SweepSpec::from_config(&cfg).expect("valid sweep")).expect("sweep runs");
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    let n: Vec<f64> = records.iter().map(|r| r.n_ss.unwrap_or(f64::NAN)).collect();
    let (k, peak) = n.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b });
    let n_r_min = records.iter().filter_map(|r| r.truncation.map(|c| c.n_r)).min().unwrap_or(0);
    let n_r_max = records.iter().filter_map(|r| r.truncation.map(|c| c.n_r)).max().unwrap_or(0);
    let c5 = outcome(
        failed == 0 && records.len() >= 30 && n_r_min >= 25 && rel(peak, 19.0) <= 0.2,
        format!(
            "{} points, {failed} failed, n_r in [{n_r_min}, {n_r_max}]; peak N_ss = {peak:.4} at eps = {:.1} rad/us",
            records.len(),
            records[k].value
        ),
    );
    let after = n[k..].iter().copied().fold(f64::INFINITY, f64::min);
    let drop = (peak - after) / peak;
    let c6 = outcome(failed == 0 && drop >= 0.2, format!("minimum after the peak {after:.4}, drop {:.1}% of peak", 100.0 * drop));
    (c5, c6)
}

fn vacuum_rabi_splitting() -> Outcome {
    let p = DeviceParams::measured();
    let cfg = TruncationConfig::new(3, 3, 5).unwrap();
    let freqs = linspace(5.83, 5.89, 1201);
    let map = probe_response_at(&p, p.f_r, &ProbeSweep::new(freqs.clone(), vec![0.005]), &cfg);
    let Ok(map) = map else {
        return outcome(false, format!("probe failed: {:?}", map.err()));
    };
    let mut peaks = find_peaks(&map.freqs, &map.values[0], 0.1);
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    if peaks.len() < 2 {
        return outcome(false, format!("found {} peak(s)", peaks.len()));
    }
    let (lo, hi) = (peaks[0].0.min(peaks[1].0), peaks[0].0.max(peaks[1].0));
    let split = (hi - lo) * 1e3;
    outcome(rel(split, 22.0) <= 0.05, format!("peaks at {lo:.5} and {hi:.5} GHz, splitting {split:.3} MHz"))
}

fn spectrum_consistency() -> Outcome {
    let p = DeviceParams::measured();
    let cfg = TruncationConfig::new(3, 3, 30).unwrap();
    let grid = composite_grid(&[(p.f_r - 1.0, p.f_r + 1.0, 2001), (p.f_r - 0.005, p.f_r + 0.005, 1001)]);
    let kappa_khz = p.kappa_r / (2.0 * PI) * 1e3;
    let mut pass = true;
    let mut parts = Vec::new();
    let mut lasing: Option<(f64, f64, Option<f64>)> = None;
    for eps in [200.0, 360.0, 600.0] {
        let run = || -> maser_core::Result<_> {
            let m = MaserModel::pumped(&p, F_GE, &DriveParams::new(F_PUMP, eps), &cfg)?;
            let l = m.liouvillian()?;
            let rho = steady_state_with(&l, SteadyStateMethod::Auto)?.rho;
            emission_spectrum(&l, &m.ladders.a_r, &rho, &grid, &SpectrumOptions::around(p.f_r, F_PUMP))
        };
        match run() {
            Ok(s) => {
                let gap = rel(s.integral, s.n_ss);
                pass &= gap <= 0.01;
                parts.push(format!("eps {eps}: integral/N_ss - 1 = {:.1e}", s.integral / s.n_ss - 1.0));
                if lasing.map_or(true, |(_, n, _)| s.n_ss > n) {
                    lasing = Some((eps, s.n_ss, s.fwhm));
                }
            }
            Err(e) => {
                pass = false;
                parts.push(format!("eps {eps}: {e}"));
            }
        }
    }
    match bare_cavity_reference(p.kappa_r, 0.1, 0.0, 20).and_then(|cav| {
        let opts = SpectrumOptions { krylov_dim: 12, ..SpectrumOptions::around(p.f_r, p.f_r) };
        emission_spectrum(&cav.generator, &cav.a, &cav.rho_ss, &grid, &opts)
    }) {
        Ok(s) => {
            let w = s.fwhm.unwrap_or(f64::NAN);
            pass &= rel(w, kappa_khz) <= 0.02;
            parts.push(format!("bare cavity FWHM {w:.3} kHz vs {kappa_khz:.3}"));
        }
        Err(e) => {
            pass = false;
            parts.push(format!("bare cavity: {e}"));
        }
    }
    if let Some((eps, n, w)) = lasing {
        let w = w.unwrap_or(f64::NAN);
        pass &= w < kappa_khz;
        let st = schawlow_townes_fwhm(p.kappa_r, n).unwrap_or(f64::NAN);
        pass &= rel(st, p.kappa_r / (2.0 * PI * n) * 1e3) < 1e-12;
        parts.push(format!("lasing point eps {eps} (N_ss {n:.3}): FWHM {w:.1} kHz, needs < {kappa_khz:.1}; Schawlow-Townes {st:.3} kHz"));
    }
    outcome(pass, parts.join("; "))
}

fn calibration_chain() -> Outcome {
    match build_chain(&CalibrationAnchor::published()) {
        Ok(c) => outcome(
            round_to(c.line_attenuation_db, 1) == 102.8 && round_to(c.output_gain_db, 0) == 64.0,
            format!("A = {:.3} dB, G = {:.3} dB", c.line_attenuation_db, c.output_gain_db),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn random_mat(rng: &mut ChaCha8Rng, d: usize) -> Mat<c64> {
    Mat::from_fn(d, d, |_, _| c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn property_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = Vec::new();
    for trial in 0..40 {
        let d = rng.gen_range(2..=6);
        let m = random_mat(&mut rng, d);
        let h = Operator::from_dense(Mat::from_fn(d, d, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5).as_ref(), 0.0);
        let c: Vec<Operator> = (0..2).map(|_| Operator::from_dense(random_mat(&mut rng, d).as_ref(), 0.0)).collect();
        let l = liouvillian(&h, &c).unwrap();
        let scale = 1.0 + l.norm_inf();
        let x = random_mat(&mut rng, d);
        let rho = {
            let r = &x * x.adjoint();
            let t: c64 = (0..d).map(|i| r[(i, i)]).sum();
            DensityMatrix::from_mat(Mat::from_fn(d, d, |i, j| r[(i, j)] / t)).unwrap()
        };
        let lr = l.apply(rho.as_ref());
        let tr: c64 = (0..d).map(|i| lr[(i, i)]).sum();
        if tr.norm() > 1e-12 * scale {
            failures.push(format!("trial {trial}: trace drift {:.1e}", tr.norm()));
        }
        let herm = (&l.apply(x.adjoint().to_owned().as_ref()) - l.apply(x.as_ref()).adjoint()).norm_max();
        if herm > 1e-12 * scale {
            failures.push(format!("trial {trial}: hermiticity defect {herm:.1e}"));
        }
        match steady_state_with(&l, SteadyStateMethod::Auto) {
            Ok(ss) => {
                if ss.relative_residual() >= 1e-10 || ss.rho.check().is_err() {
                    failures.push(format!("trial {trial}: steady state residual {:.1e} or invalid state", ss.relative_residual()));
                }
            }
            Err(e) => failures.push(format!("trial {trial}: {e}")),
        }
    }
    // iterative solution against the dense null vector, D = 2n ≤ 12
    for n in 2..=6 {
        let s = annihilation(2).unwrap().kron(&Operator::identity(n));
        let a = Operator::identity(2).kron(&annihilation(n).unwrap());
        let h = &(&(&s.matmul(&a.adjoint()) + &s.adjoint().matmul(&a)) * 0.7) + &(&(&s + &s.adjoint()) * 0.9);
        let l = liouvillian(&h, &[&a * 0.8, &s * 0.3]).unwrap();
        let null = null_space_dense(&l).unwrap();
        let it = steady_state_with(&l, SteadyStateMethod::Iterative).unwrap();
        let v = &null[0];
        let t: c64 = (0..2 * n).map(|i| v[(i, i)]).sum();
        let gap = (0..2 * n).flat_map(|i| (0..2 * n).map(move |j| (i, j))).map(|(i, j)| (v[(i, j)] / t - it.rho.as_ref()[(i, j)]).norm()).fold(0.0, f64::max);
        if null.len() != 1 || gap > 1e-8 {
            failures.push(format!("D = {}: null space {} vs iterative gap {gap:.1e}", 2 * n, null.len()));
        }
    }
    for n in 2..30 {
        let defect = &annihilation(n).unwrap().commutator(&creation(n).unwrap()) - &Operator::identity(n);
        if defect.iter().any(|(i, j, v)| v.norm() > 1e-12 && (i, j) != (n - 1, n - 1)) {
            failures.push(format!("commutator defect outside the top level for n = {n}"));
        }
    }
    // physical operating point: positivity within tolerance
    let m = MaserModel::pumped(&DeviceParams::measured(), F_GE, &DriveParams::new(F_PUMP, 360.0), &TruncationConfig::new(3, 3, 20).unwrap()).unwrap();
    match steady_state_with(&m.liouvillian().unwrap(), SteadyStateMethod::Auto) {
        Ok(ss) => {
            let min_ev = ss.rho.min_eigenvalue().unwrap_or(f64::NAN);
            if !(min_ev >= -1e-8) || ss.relative_residual() >= 1e-10 {
                failures.push(format!("device steady state: min eigenvalue {min_ev:.1e}, residual {:.1e}", ss.relative_residual()));
            }
            let n = expectation(&m.ladders.number(Slot::Reservoir), &ss.rho).unwrap();
            if n.im.abs() > 1e-10 {
                failures.push("photon number is not real".into());
            }
        }
        Err(e) => failures.push(format!("device steady state: {e}")),
    }
    let pass = failures.is_empty();
    let detail = if pass { "40 random generators, null-space comparison D = 4..12, commutator n = 2..29, device state".to_string() } else { failures.join("; ") };
    outcome(pass, detail)
}

/// Local maxima of `n` that rise above `floor` and are separated from
/// their neighbours by a dip.
fn emission_regions(f: &[f64], n: &[f64], floor: f64, dip: f64) -> Vec<(f64, f64)> {
    let peaks: Vec<usize> = (1..n.len() - 1).filter(|&i| n[i] > n[i - 1] && n[i] >= n[i + 1] && n[i] >= floor).collect();
    let mut regions: Vec<usize> = Vec::new();
    for i in peaks {
        if let Some(&j) = regions.last() {
            let valley = n[j..=i].iter().copied().fold(f64::INFINITY, f64::min);
            if valley > dip * n[i].min(n[j]) {
                // same region: keep the higher maximum
                if n[i] > n[j] {
                    *regions.last_mut().unwrap() = i;
                }
                continue;
            }
        }
        regions.push(i);
    }
    regions.into_iter().map(|i| (f[i], n[i])).collect()
}

fn pump_frequency_regions() -> Outcome {
    let p = DeviceParams::measured();
    let cfg = Config::default();
    // resonant configuration f_ge = f_r, pump at the source power of the map
    let overrides: Vec<String> = [
        "sweep.variable=\"pump_frequency\"".to_string(),
        "sweep.start=5.74".into(),
        "sweep.stop=5.82".into(),
        "sweep.points=41".into(),
        "truncation.n_r=25".into(),
        "truncation.converge=true".into(),
        format!("operating_point.f_ge_ghz={}", p.f_r),
        format!("drive.epsilon_rad_per_us={}", cfg.calibration.drive_map.epsilon(-5.0)),
    ]
    .to_vec();
    let cfg = Config::from_toml_with_overrides("", &overrides).expect("valid config");
    let records = run_sweep(&SweepSpec::from_config(&cfg).expect("valid sweep")).expect("sweep runs");
    if let Some(r) = records.iter().find(|r| r.error.is_some()) {
        return outcome(false, format!("point {} failed: {}", r.value, r.error.as_deref().unwrap_or("")));
    }
    let f: Vec<f64> = records.iter().map(|r| r.value).collect();
    let n: Vec<f64> = records.iter().map(|r| r.n_ss.unwrap()).collect();
    let top = n.iter().copied().fold(0.0, f64::max);
    let regions = emission_regions(&f, &n, 0.25 * top, 0.7);
    let aux_line = 0.5 * (p.f_r + p.f_a);
    let gf_line = p.half_f_gf(p.f_r);
    let nearest = |target: f64| regions.iter().copied().filter(|(fr, _)| (fr - target).abs() <= 0.015).min_by(|a, b| (a.0 - target).abs().total_cmp(&(b.0 - target).abs()));
    let listed: Vec<String> = regions.iter().map(|(fr, v)| format!("{fr:.4} ({v:.2})")).collect();
    match (nearest(aux_line), nearest(gf_line)) {
        (Some(a), Some(g)) if a.0 != g.0 => {
            let sep = (a.0 - g.0).abs() * 1e3;
            let expected = (aux_line - gf_line).abs() * 1e3;
            outcome(
                rel(sep, expected) <= 0.2,
                format!("regions [{}] GHz; near (f_r+f_a)/2 = {aux_line:.4}: {:.4}, near f_gf/2 = {gf_line:.4}: {:.4}; separation {sep:.1} MHz vs {expected:.1} MHz", listed.join(", "), a.0, g.0),
            )
        }
        _ => outcome(false, format!("regions [{}] GHz: no distinct pair near {aux_line:.4} and {gf_line:.4}", listed.join(", "))),
    }
}

fn main() -> ExitCode {
    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Vec<Outcome>>)> = vec![
        (1, "closed-form effective decay", Box::new(|| vec![closed_form_rates()])),
        (2, "balance effective decay", Box::new(|| vec![balance_rate()])),
        (3, "eigenvalue formula vs reduced generator", Box::new(|| vec![formula_vs_reduced_liouvillian()])),
        (4, "simple-model population", Box::new(|| vec![simple_population()])),
        (5, "peak population of the pump sweep / 6 self-quenching", Box::new(|| {
            let (a, b) = pump_sweep();
            vec![a, b]
        })),
        (7, "vacuum Rabi splitting", Box::new(|| vec![vacuum_rabi_splitting()])),
        (8, "spectrum consistency", Box::new(|| vec![spectrum_consistency()])),
        (9, "calibration chain", Box::new(|| vec![calibration_chain()])),
        (10, "property suites", Box::new(|| vec![property_suites()])),
        (11, "pump-frequency emission regions", Box::new(|| vec![pump_frequency_regions()])),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        let t = Instant::now();
        let outcomes = run();
        let secs = t.elapsed().as_secs_f64();
        let names: Vec<&str> = name.split(" / ").collect();
        for (k, o) in outcomes.iter().enumerate() {
            let (num, label) = if k == 0 { (id, names[0]) } else { (id + k as u32, names[k].trim_start_matches(|c: char| c.is_ascii_digit() || c == ' ')) };
            let tag = if o.pass { "PASS" } else { "FAIL" };
            println!("criterion {num:>2} [{tag}] {label}: {} ({secs:.1} s)", o.detail);
            if !o.pass {
                failed.push(num);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
