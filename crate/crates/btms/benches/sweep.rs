use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use triz_btms::{sweep_contact_angle, AssemblySpec, ExecutionMode, SimulationOptions};

fn sweep(c: &mut Criterion) {
    let spec = AssemblySpec::bundled();
    let thetas: Vec<f64> = [10.0f64, 20.0, 30.0, 45.0].iter().map(|d| d.to_radians()).collect();
    let rates = [0.5, 1.0, 2.0, 3.0];
    // a fixed 10-minute window keeps every row the same size
    let opts = SimulationOptions::new(1.0).duration(600.0);

    let mut group = c.benchmark_group("contact_angle_sweep");
    group.sample_size(10);
    for (name, mode) in [("sequential", ExecutionMode::Sequential), ("parallel", ExecutionMode::Parallel)] {
        group.bench_function(name, |b| {
            b.iter(|| sweep_contact_angle(black_box(&spec), &thetas, &rates, &opts, mode).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
