use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dopcap_bench::{tdl_channel, tdl_setup};
use dopcap_core::alignment::{self, SchemeMode, SchemeOpts};
use dopcap_core::mc::MCConfig;
use dopcap_core::{duality, gaussian, ofdm, InputCovariance};

fn linearize(c: &mut Criterion) {
    let mut group = c.benchmark_group("linearize");
    for n in [16, 64, 256] {
        let (cfg, taps) = tdl_setup(n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| ofdm::linearize(&cfg, &taps).unwrap())
        });
    }
    group.finish();
}

fn lower_bounds(c: &mut Criterion) {
    let mut group = c.benchmark_group("lower");
    group.sample_size(10);
    for n in [16, 64] {
        let ch = tdl_channel(n, 0.1, 1);
        let p = n as f64 * 1e3;
        let q = InputCovariance::isotropic(n, p);
        group.bench_with_input(BenchmarkId::new("gaussian_linear", n), &n, |b, _| {
            b.iter(|| gaussian::rate_gaussian_linear(&ch, &q).unwrap())
        });
        let pre = alignment::build_precoder(&ch, alignment::default_tol(n)).unwrap();
        let mc = MCConfig::new(1000, 3);
        let opts = SchemeOpts::new(SchemeMode::Pilot);
        group.bench_with_input(BenchmarkId::new("sa_pilot", n), &n, |b, _| {
            b.iter(|| alignment::optimize_scheme(&ch, &pre, p, &mc, &opts).unwrap())
        });
    }
    group.finish();
}

fn upper_bounds(c: &mut Criterion) {
    let mut group = c.benchmark_group("upper");
    group.sample_size(10);
    for n in [16, 64] {
        let ch = tdl_channel(n, 0.1, 1);
        let p = n as f64 * 1e3;
        group.bench_with_input(BenchmarkId::new("ub_logdet", n), &n, |b, _| {
            b.iter(|| duality::ub_logdet(&ch, p).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("ub_dof", n), &n, |b, _| {
            b.iter(|| duality::ub_dof(&ch, p).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, linearize, lower_bounds, upper_bounds);
criterion_main!(benches);
