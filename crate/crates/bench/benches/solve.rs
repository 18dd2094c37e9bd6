use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use asil_alloc::oracle::{brute_force_with, OracleOptions};
use asil_alloc::{build_model, evolve, solve, BuildOptions, GaParams, Limits, Priority, Scenario};
use asil_alloc_bench::{case_study_model, generated, generated_model};

fn case_study(c: &mut Criterion) {
    let instance = asil_alloc::case_study();
    c.bench_function("build case study", |b| {
        b.iter(|| build_model(black_box(&instance), &BuildOptions::default()).unwrap())
    });
    let model = case_study_model(Priority::CostFirst);
    c.bench_function("solve case study cost-first", |b| {
        b.iter(|| solve(black_box(&model), &Limits::default()).unwrap())
    });
    let params = GaParams {
        generations: 50,
        ..Default::default()
    };
    c.bench_function("ga case study 50 generations", |b| {
        b.iter(|| evolve(black_box(&instance), &params).unwrap())
    });
}

fn scaling(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve generated");
    for scenario in [Scenario::DOnC, Scenario::COnB, Scenario::NoDecomp] {
        for n in [4, 6, 8] {
            let models: Vec<_> = (0..5).map(|seed| generated_model(n, scenario, seed)).collect();
            group.bench_with_input(BenchmarkId::new(scenario.name(), n), &models, |b, models| {
                b.iter(|| {
                    for m in models {
                        solve(m, &Limits::default()).unwrap();
                    }
                })
            });
        }
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let instance = generated(4, Scenario::COnB, 1);
    let options = OracleOptions::default();
    c.bench_function("oracle 4 tasks c-on-b", |b| {
        b.iter(|| brute_force_with(black_box(&instance), Priority::LatencyFirst, &options).unwrap())
    });
}

criterion_group!(benches, case_study, scaling, oracle);
criterion_main!(benches);
