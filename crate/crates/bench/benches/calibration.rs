//! Monte Carlo calibration throughput.

use criterion::{criterion_group, criterion_main, Criterion};
use twinspect::calibration::{brownian_limit_samples, BrownianLaw};
use twinspect::table::GridSpec;

fn bench_brownian_draws(c: &mut Criterion) {
    let mut g = c.benchmark_group("brownian_limit");
    g.sample_size(10);
    g.bench_function("l_sn_10_draws", |b| {
        b.iter(|| {
            brownian_limit_samples(
                BrownianLaw::Sn,
                0.6,
                20.0,
                &[GridSpec::brownian_default()],
                10,
                99,
                1.0,
            )
            .unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, bench_brownian_draws);
criterion_main!(benches);
