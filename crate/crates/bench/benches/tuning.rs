use criterion::{criterion_group, criterion_main, Criterion};
use stsmc_bench::tuning_problems;
use stsmc_core::tune_gains;

fn tune(c: &mut Criterion) {
    let mut group = c.benchmark_group("tune_gains");
    for (name, problem) in tuning_problems() {
        group.bench_function(name, |b| b.iter(|| tune_gains(&problem).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, tune);
criterion_main!(benches);
