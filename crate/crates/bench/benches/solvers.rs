use criterion::{black_box, criterion_group, criterion_main, Criterion};

use maser_core::device::{DeviceParams, DriveParams, MaserModel};
use maser_core::lindblad::{steady_state_with, SteadyStateMethod};
use maser_core::spectrum::{lorentz_fit, lorentzian};
use maser_core::TruncationConfig;

fn model(n_r: usize) -> MaserModel {
    let cfg = TruncationConfig::new(3, 3, n_r).unwrap();
    MaserModel::pumped(&DeviceParams::measured(), 5.863, &DriveParams::new(5.7875, 360.0), &cfg).unwrap()
}

fn liouvillian_apply(c: &mut Criterion) {
    let m = model(20);
    let l = m.liouvillian().unwrap();
    let rho = steady_state_with(&l, SteadyStateMethod::Auto).unwrap().rho;
    c.bench_function("liouvillian_apply_3x3x20", |b| b.iter(|| l.apply(black_box(rho.as_ref()))));
}

fn steady_state(c: &mut Criterion) {
    let mut group = c.benchmark_group("steady_state");
    group.sample_size(10);
    for n_r in [4, 10] {
        let l = model(n_r).liouvillian().unwrap();
        group.bench_function(format!("3x3x{n_r}"), |b| b.iter(|| steady_state_with(black_box(&l), SteadyStateMethod::Auto).unwrap()));
    }
    group.finish();
}

fn fit(c: &mut Criterion) {
    let freqs: Vec<f64> = (0..1001).map(|i| 5.855 + 1e-5 * i as f64).collect();
    let vals: Vec<f64> = freqs.iter().map(|&f| lorentzian(f, 40.0, 5.86, 1.1e-4, 0.2)).collect();
    c.bench_function("lorentz_fit_1001", |b| b.iter(|| lorentz_fit(black_box(&freqs), black_box(&vals)).unwrap()));
}

criterion_group!(benches, liouvillian_apply, steady_state, fit);
criterion_main!(benches);
