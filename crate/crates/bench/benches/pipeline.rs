use std::collections::BTreeMap;

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use wiener_cubature::cubature::{build, dyadic_refine, stream_features, StepTable};
use wiener_cubature::oa::build_binary_oa;
use wiener_cubature::recombine::{recombine, WeightedPointSet};
use wiener_cubature::sde::make_model;
use wiener_cubature::sim::{sample_brownian_paths, solve_along_path, Sampler};
use wiener_cubature::tensor::path_signature;
use wiener_cubature::BuildOptions;

fn signatures(c: &mut Criterion) {
    let mut g = c.benchmark_group("signature");
    let paths = sample_brownian_paths(Sampler::Mc, 2, 64, 1, 1).unwrap();
    for degree in [5, 7, 9] {
        g.bench_with_input(BenchmarkId::new("path d=2 N=64", degree), &degree, |b, &deg| {
            b.iter(|| path_signature(black_box(&paths[0]), deg, (0.0, 1.0)).unwrap())
        });
    }
    g.finish();
}

fn features(c: &mut Criterion) {
    let (dim, degree, steps) = (1, 7, 32);
    let oa = build_binary_oa(steps * dim, degree).unwrap().randomize_columns(0);
    let table = StepTable::new(dim, degree, steps);
    let idx = table.basis().select(degree - 1, degree, false);
    c.bench_function("stream features D=7 N=32", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            stream_features(&oa, &table, &idx, |_, f| {
                acc += f[0];
                Ok(())
            })
            .unwrap();
            acc
        })
    });
}

fn recombination(c: &mut Criterion) {
    let (n, m) = (5000, 30);
    let points: Vec<f64> = (0..n * m).map(|i| ((i * 7919) % 1009) as f64 / 1009.0 - 0.5).collect();
    let ps = WeightedPointSet::new(m, points, vec![1.0 / n as f64; n]).unwrap();
    c.bench_function("recombine 5000x30", |b| b.iter(|| recombine(black_box(&ps), None).unwrap()));
}

fn construction(c: &mut Criterion) {
    let mut g = c.benchmark_group("build");
    g.sample_size(10);
    let opts = BuildOptions::default();
    g.bench_function("d=1 D=5 N=32", |b| b.iter(|| build(1, 5, 32, &opts).unwrap()));
    g.bench_function("d=1 D=7 N=32", |b| b.iter(|| build(1, 7, 32, &opts).unwrap()));
    let base = build(1, 5, 32, &opts).unwrap();
    g.bench_function("dyadic refine D=5", |b| b.iter(|| dyadic_refine(&base, &opts).unwrap()));
    g.finish();
}

fn solver(c: &mut Criterion) {
    let none = BTreeMap::new();
    let mut g = c.benchmark_group("rk4 along 64-step path");
    for name in ["ou", "cir", "heston"] {
        let model = make_model(name, &none).unwrap();
        let path = &sample_brownian_paths(Sampler::Mc, model.noise_dim(), 64, 1, 3).unwrap()[0];
        let y0 = model.initial_state();
        g.bench_function(name, |b| b.iter(|| solve_along_path(&model, black_box(path), &y0, 16).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, signatures, features, recombination, construction, solver);
criterion_main!(benches);
