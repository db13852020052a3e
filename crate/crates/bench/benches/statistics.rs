//! Benchmarks for the statistic kernels and the λ quadrature.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use cmi_core::model::{median_reg_moment, simulate_missing_data, MissingDataDesign};
use cmi_core::rates::{lambda_bdd, LambdaConfig, LocalModelParams, Psi};
use cmi_core::seed::{derive_rng, Stream};
use cmi_core::stats::{
    BandwidthRule, PreparedStatistic, SampleSession, SigmaNRule, StatisticSpec, Weighting,
};

fn bench_statistics(c: &mut Criterion) {
    let design = MissingDataDesign::design(3).unwrap();
    let model = median_reg_moment();
    let theta = [0.3, 0.0];
    let mut group = c.benchmark_group("statistic");
    for &n in &[200usize, 500, 2000] {
        let sample =
            simulate_missing_data(&design, n, &mut derive_rng(1, Stream::Simulate, &[n as u64]))
                .unwrap();
        let specs = [
            ("iv_cvm_bounded", StatisticSpec::iv_cvm(1.0, Weighting::Bounded)),
            (
                "iv_cvm_truncvar",
                StatisticSpec::iv_cvm(1.0, Weighting::TruncVar(SigmaNRule::Third)),
            ),
            ("iv_ks_bounded", StatisticSpec::iv_ks(Weighting::Bounded)),
            ("iv_ks_multiscale", StatisticSpec::iv_ks(Weighting::Multiscale)),
            ("kern_cvm", StatisticSpec::kern_cvm(1.0, BandwidthRule::Fifth)),
            ("kern_ks", StatisticSpec::kern_ks(BandwidthRule::Fifth)),
        ];
        for (name, spec) in specs {
            let prepared = PreparedStatistic::new(spec).unwrap();
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| {
                    let session = SampleSession::new(&sample, &model).unwrap();
                    black_box(session.evaluate(&prepared, &theta).unwrap().raw)
                })
            });
        }
    }
    group.finish();
}

fn bench_session_reuse(c: &mut Criterion) {
    // The session amortizes the covariate sort across parameter values.
    let design = MissingDataDesign::design(3).unwrap();
    let model = median_reg_moment();
    let sample =
        simulate_missing_data(&design, 500, &mut derive_rng(2, Stream::Simulate, &[0])).unwrap();
    let prepared = PreparedStatistic::new(StatisticSpec::iv_cvm(1.0, Weighting::Bounded)).unwrap();
    let thetas: Vec<[f64; 2]> = (0..5).map(|k| [0.1 + 0.1 * k as f64, 0.0]).collect();
    c.bench_function("session_reuse_5_thetas", |b| {
        b.iter(|| {
            let session = SampleSession::new(&sample, &model).unwrap();
            let mut acc = 0.0;
            for theta in &thetas {
                acc += session.evaluate(&prepared, theta).unwrap().raw;
            }
            black_box(acc)
        })
    });
}

fn bench_lambda(c: &mut Criterion) {
    let par = LocalModelParams::new(2.0, Psi::Constant(1.0), 1.0, 1.0, 1.0);
    let cfg = LambdaConfig::default();
    c.bench_function("lambda_bdd_default_resolution", |b| {
        b.iter(|| black_box(lambda_bdd(&par, -1.0, 1.0, &cfg).unwrap()))
    });
}

criterion_group!(benches, bench_statistics, bench_session_reuse, bench_lambda);
criterion_main!(benches);
