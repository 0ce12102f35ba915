use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use doc_coord_core::{
    build_lmi, simulate, solve_feasibility, synthesize_gain, FeasibilitySettings, NetworkGraph,
    Scenario, SimConfig, SynthesisSettings,
};

fn laplacian_spectrum(c: &mut Criterion) {
    let graph = NetworkGraph::path(20).unwrap();
    c.bench_function("spectrum path(20)", |b| {
        b.iter(|| black_box(&graph).spectrum().unwrap())
    });
}

fn feasibility(c: &mut Criterion) {
    let s = Scenario::reference();
    let spectrum = s.graph.spectrum().unwrap();
    let prob = build_lmi(
        &s.model,
        &s.bounds(),
        &s.objectives,
        &spectrum,
        s.require_gains().unwrap(),
    )
    .unwrap();
    let mut group = c.benchmark_group("certificates");
    group.sample_size(10);
    group.bench_function("feasibility reference", |b| {
        b.iter(|| solve_feasibility(black_box(&prob), &FeasibilitySettings::default()).unwrap())
    });
    let path = NetworkGraph::path(5).unwrap().spectrum().unwrap();
    group.bench_function("synthesis path(5)", |b| {
        b.iter(|| {
            synthesize_gain(
                &s.model,
                &s.bounds(),
                &s.objectives,
                black_box(&path),
                &SynthesisSettings::default(),
            )
            .unwrap()
        })
    });
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let s = Scenario::reference();
    let system = s.system().unwrap();
    let cfg = SimConfig {
        t_final: 1.0,
        tail_window: (0.5, 1.0),
        ..s.sim.clone()
    };
    let mut group = c.benchmark_group("simulator");
    group.sample_size(20);
    group.bench_function("rk4 reference 1s", |b| {
        b.iter(|| simulate(&system, black_box(&cfg)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, laplacian_spectrum, feasibility, simulation);
criterion_main!(benches);
