use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use tiersim_bench::{small_params, small_trace};
use tiersim_core::{run_scenario, EventLog, Policy, PolicyConfig};

fn run(c: &mut Criterion) {
    let events = small_trace(100_000);
    let cfg = PolicyConfig::default();
    let mut group = c.benchmark_group("run_scenario");
    group.sample_size(10);
    group.throughput(Throughput::Elements(events.len() as u64));
    for policy in Policy::ALL {
        let params = small_params(100.0);
        group.bench_with_input(BenchmarkId::from_parameter(policy), &policy, |b, &p| {
            b.iter(|| run_scenario(&cfg, &params, p, &events, EventLog::Off).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, run);
criterion_main!(benches);
