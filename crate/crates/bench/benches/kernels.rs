use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use famcl_core::likelihood::{cl_eval, default_or_grid, profile_with, OptimizeOptions};
use famcl_core::normal::bvn_cdf;
use famcl_core::simulate::simulate_dataset;
use famcl_core::{CLKind, CompositeLikelihood, DependenceOdds, ModelParams, Param, PedigreeTemplate, PhenotypeSampler, SimConfig};

fn design() -> (SimConfig, PhenotypeSampler) {
    let p = ModelParams::new(-2.38, 1.76, DependenceOdds::from_array([3.0, 2.5, 2.0, 1.5, 1.2])).unwrap();
    (SimConfig::new(300, PedigreeTemplate::extended_twelve(), 0.2, p, 1), PhenotypeSampler::new(p).unwrap())
}

fn kernels(c: &mut Criterion) {
    c.bench_function("bvn_cdf", |b| b.iter(|| bvn_cdf(black_box(-0.8), black_box(0.3), black_box(0.45)).unwrap()));

    let (cfg, sampler) = design();
    let mut rep = 0;
    c.bench_function("simulate_dataset_300x12", |b| {
        b.iter(|| {
            rep += 1;
            simulate_dataset(&cfg, &sampler, rep).unwrap()
        })
    });

    let data = simulate_dataset(&cfg, &sampler, 0).unwrap();
    for kind in [CLKind::Independence, CLKind::PairwiseWeighted] {
        c.bench_function(&format!("cl_eval_{kind}"), |b| b.iter(|| cl_eval(black_box(&data), &cfg.params, kind).unwrap()));
    }

    let cl = CompositeLikelihood::new(&data, CLKind::Independence).unwrap();
    let grid = default_or_grid();
    c.bench_function("profile_401", |b| {
        b.iter(|| profile_with(&cl, Param::Beta1, black_box(&grid), &OptimizeOptions::default()).unwrap())
    });
}

criterion_group!(benches, kernels);
criterion_main!(benches);
