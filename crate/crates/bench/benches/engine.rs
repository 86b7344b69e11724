use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use std::hint::black_box;

use wmsurface_bench::synthetic_outcomes;
use wmsurface_core::gp::{self, FitConfig, GridSpec};
use wmsurface_core::{extract_isocontour, generate_standard_pattern, propose_next, FeasibilityConstraints, StimulusParams};

fn full_fit(c: &mut Criterion) {
    let cfg = FitConfig::default();
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    for n in [10usize, 30, 60] {
        let data = synthetic_outcomes(n, 7);
        group.bench_with_input(BenchmarkId::from_parameter(n), &data, |b, data| {
            b.iter(|| gp::fit(black_box(data), &cfg).unwrap())
        });
    }
    group.finish();
}

fn online_update(c: &mut Criterion) {
    let cfg = FitConfig::default();
    let data = synthetic_outcomes(30, 3);
    let state = gp::fit(&data[..29], &cfg).unwrap();
    c.bench_function("online update at 30 trials", |b| {
        b.iter_batched(
            || state.clone(),
            |s| gp::update_online(&s, &data[29], &cfg).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn prediction_and_acquisition(c: &mut Criterion) {
    let cfg = FitConfig::default();
    let data = synthetic_outcomes(30, 11);
    let state = gp::fit(&data, &cfg).unwrap();
    let grid_spec = GridSpec::default();
    let slices = GridSpec::threshold_slices();
    let constraints = FeasibilityConstraints::default();
    c.bench_function("posterior grid", |b| b.iter(|| state.predict_grid(black_box(&grid_spec)).unwrap()));
    c.bench_function("isocontour", |b| {
        b.iter(|| extract_isocontour(&state.predict_grid(black_box(&slices)).unwrap()))
    });
    let grid = state.predict_grid(&grid_spec).unwrap();
    c.bench_function("propose next", |b| b.iter(|| propose_next(black_box(&grid), &data, &constraints).unwrap()));
}

fn patterns(c: &mut Criterion) {
    let mut group = c.benchmark_group("pattern");
    for (l, k) in [(4u32, 2u32), (9, 3), (16, 8)] {
        let p = StimulusParams::new(l, k).unwrap();
        group.bench_with_input(BenchmarkId::new("pool 500", format!("L{l} K{k}")), &p, |b, &p| {
            let mut seed = 0;
            b.iter(|| {
                seed += 1;
                generate_standard_pattern(p, seed, 500).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, full_fit, online_update, prediction_and_acquisition, patterns);
criterion_main!(benches);
