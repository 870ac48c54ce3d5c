use std::hint::black_box;

use clustersync::cluster::solve_phases;
use clustersync::portrait::find_fixed_points;
use clustersync::simulator::{integrate_many, InitialCondition, SimConfig};
use clustersync::stability::design_sweep;
use clustersync::{Exec, FourierCoupling, Partition, SolveOptions};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn simulate(c: &mut Criterion) {
    let g = FourierCoupling::preset("case1").unwrap();
    let configs: Vec<SimConfig> = (0..8)
        .map(|seed| {
            let mut cfg = SimConfig::new(6, g.clone(), 50.0);
            cfg.rng_seed = seed;
            cfg.initial = InitialCondition::Random;
            cfg.record_stride = 10;
            cfg
        })
        .collect();
    let mut group = c.benchmark_group("integrate_many");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| integrate_many(black_box(&configs), exec))
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let g = FourierCoupling::preset("case1").unwrap();
    let p = Partition::new(vec![2, 2, 2]).unwrap();
    let ph = solve_phases(&g, &p, &[0.0, 1.70, 4.76], SolveOptions::default())
        .unwrap()
        .phase_values();
    let rs: Vec<f64> = (0..4001).map(|i| -5.0 + 7.0 * i as f64 / 4000.0).collect();
    let mut group = c.benchmark_group("design_sweep");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| design_sweep(&g, &p, black_box(&ph), 0.5, &rs, exec).unwrap())
        });
    }
    group.finish();
}

fn portrait(c: &mut Criterion) {
    let g = FourierCoupling::preset("case1").unwrap();
    let p = Partition::new(vec![2, 2, 2]).unwrap();
    let mut group = c.benchmark_group("find_fixed_points");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| find_fixed_points(black_box(&g), &p, 48, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, simulate, sweep, portrait);
criterion_main!(benches);
