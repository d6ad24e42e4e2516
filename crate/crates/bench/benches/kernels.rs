use attnblend_bench::{features, lcg_matrix, sdxl_spec, style_pair};
use attnblend_core::metrics::{TextureMetrics, DEFAULT_HFS_CUTOFF};
use attnblend_core::ot::{build_cost_matrix, sinkhorn, CostParams, SinkhornConfig};
use attnblend_core::sasf::{dsin_inject, DsinConfig};
use attnblend_core::select::{AttentionStack, IndexSets, TokenSelector};
use attnblend_core::synthetic::{generate, render_gray};
use attnblend_core::{run_caof, CaofConfig, CostMatrix, Grid};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn cost_matrix(c: &mut Criterion) {
    let mut group = c.benchmark_group("cost_matrix");
    group.sample_size(10);
    for side in [16, 32] {
        let grid = Grid::new(side, side);
        let n = grid.len();
        let (a, b) = (features(n, 320, 1), features(n, 320, 2));
        let sets = IndexSets::new((0..n).step_by(2).collect(), (1..n).step_by(2).collect(), grid).unwrap();
        let params = CostParams::default();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| build_cost_matrix(black_box(&a), black_box(&b), &sets, &params).unwrap())
        });
    }
    group.finish();
}

fn sinkhorn_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("sinkhorn");
    group.sample_size(10);
    for n in [64, 256] {
        let cost = CostMatrix::new(lcg_matrix(n, n, 3).mapv(|x| x.abs())).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| sinkhorn(black_box(&cost), 0.1, &SinkhornConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn caof_pipeline(c: &mut Criterion) {
    let spec = sdxl_spec(24);
    let fx = generate(&spec).unwrap();
    let sr = AttentionStack::new(fx.stack_replaced, spec.grid).unwrap();
    let sb = AttentionStack::new(fx.stack_blend, spec.grid).unwrap();
    let cfg = CaofConfig::new(TokenSelector::single(2), TokenSelector::single(2));
    let mut group = c.benchmark_group("caof");
    group.sample_size(10);
    group.bench_function("24x24", |bench| {
        bench.iter(|| run_caof(&sr, &sb, &fx.o_replaced, &fx.o_blend, &cfg).unwrap())
    });
    group.finish();
}

fn dsin(c: &mut Criterion) {
    let mut group = c.benchmark_group("dsin");
    for side in [32, 64] {
        let (content, style, _) = style_pair(side);
        group.bench_with_input(BenchmarkId::from_parameter(side * side), &side, |bench, _| {
            bench.iter(|| dsin_inject(black_box(&content), black_box(&style), &DsinConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn texture(c: &mut Criterion) {
    let mut group = c.benchmark_group("texture");
    for side in [64, 128] {
        let (content, _, grid) = style_pair(side);
        let img = render_gray(&content, grid).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(side), &side, |bench, _| {
            bench.iter(|| TextureMetrics::compute(black_box(&img), DEFAULT_HFS_CUTOFF).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, cost_matrix, sinkhorn_solve, caof_pipeline, dsin, texture);
criterion_main!(benches);
