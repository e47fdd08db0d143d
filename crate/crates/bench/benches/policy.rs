use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use tiersim_bench::{skewed_histogram, uniform_histogram};
use tiersim_core::{decide_split, Address, BlockedCbf, PolicyConfig, SubpageHistogram};

fn split_decision(c: &mut Criterion) {
    let cfg = PolicyConfig::default();
    let skewed = skewed_histogram();
    let flat = uniform_histogram();
    c.bench_function("decide_split/skewed", |b| b.iter(|| decide_split(black_box(&skewed), &cfg, 130)));
    c.bench_function("decide_split/uniform", |b| b.iter(|| decide_split(black_box(&flat), &cfg, 0)));
}

fn sketch(c: &mut Criterion) {
    let cbf = BlockedCbf::with_defaults(7);
    let mut page = 0u64;
    c.bench_function("bcbf/update", |b| {
        b.iter(|| {
            page = page.wrapping_add(0x9e37_79b9);
            cbf.update(Address(black_box(page) << 12));
        })
    });
    c.bench_function("bcbf/get", |b| {
        b.iter(|| {
            page = page.wrapping_add(0x9e37_79b9);
            cbf.get(Address(black_box(page) << 12))
        })
    });
}

fn histogram(c: &mut Criterion) {
    let h = SubpageHistogram::new();
    let mut addr = 0u64;
    c.bench_function("histogram/record_sample", |b| {
        b.iter(|| {
            addr = addr.wrapping_add(4096 * 7);
            h.record_sample(Address(black_box(addr)));
        })
    });
}

criterion_group!(benches, split_decision, sketch, histogram);
criterion_main!(benches);
