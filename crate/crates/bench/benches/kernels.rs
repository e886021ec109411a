use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use nilflow_core::geometry::{ricci_form, GroupLaw};
use nilflow_core::norms::check_norm_inequalities;
use nilflow_core::stochastic::{sample_driver, Engine, Simulator};
use nilflow_core::{validate_extension, zoo, ExtensionSpec};

fn models() -> Vec<(String, ExtensionSpec)> {
    [
        zoo::heisenberg(2, 1),
        zoo::default_beta(3, 1),
        zoo::build_path_space_example(4),
        zoo::step3_karhunen_loeve(16),
    ]
    .into_iter()
    .map(|d| {
        let d = d.unwrap();
        (format!("{}-d{}", d.name, d.spec.dim()), d.spec)
    })
    .collect()
}

fn point(dim: usize, phase: f64) -> Vec<f64> {
    (0..dim).map(|i| ((i as f64 + phase) * 0.7).sin()).collect()
}

fn group_law(c: &mut Criterion) {
    let mut group = c.benchmark_group("multiply");
    for (name, spec) in models() {
        let law = GroupLaw::new(&spec);
        let (g, h) = (point(spec.dim(), 0.0), point(spec.dim(), 1.0));
        let mut out = vec![0.0; spec.dim()];
        let mut scratch = Vec::new();
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| law.multiply_into(black_box(&g), black_box(&h), &mut out, &mut scratch))
        });
    }
    group.finish();
}

fn engines(c: &mut Criterion) {
    let mut group = c.benchmark_group("endpoint_1024_steps");
    group.sample_size(20);
    for (name, spec) in models() {
        let driver = sample_driver(spec.m(), spec.n(), 1.0, 1024, 3, 0).unwrap();
        for engine in [Engine::Rollout, Engine::Expansion, Engine::Signature] {
            let sim = Simulator::new(&spec, engine);
            let id = BenchmarkId::new(format!("{engine:?}").to_lowercase(), &name);
            group.bench_function(id, |b| b.iter(|| sim.endpoint(black_box(&driver))));
        }
    }
    group.finish();
}

fn structure(c: &mut Criterion) {
    let mut group = c.benchmark_group("structure");
    group.sample_size(20);
    for (name, spec) in models() {
        group.bench_function(BenchmarkId::new("validate", &name), |b| {
            b.iter(|| validate_extension(black_box(&spec), 1e-9))
        });
        group.bench_function(BenchmarkId::new("ricci", &name), |b| {
            b.iter(|| ricci_form(black_box(&spec)))
        });
        group.bench_function(BenchmarkId::new("norms", &name), |b| {
            b.iter(|| check_norm_inequalities(black_box(&spec), 4, 1.05))
        });
    }
    group.finish();
}

criterion_group!(benches, group_law, engines, structure);
criterion_main!(benches);
