use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qhd_core::experiments::{make_initial, InitialDataSpec};
use qhd_core::qdd::QddStepper;
use qhd_core::sl::SlStepper;
use qhd_core::spectral::solve_poisson;
use qhd_core::{PressureLaw, QDDParams, RealField, SLParams, TorusGrid};

fn spectral(c: &mut Criterion) {
    let mut g = c.benchmark_group("poisson");
    for n in [64, 128] {
        let grid = TorusGrid::square(n).unwrap();
        let rhs = RealField::from_fn(&grid, |x, y| (2.0 * PI * 3.0 * x).sin() * (2.0 * PI * 2.0 * y).cos());
        g.bench_with_input(BenchmarkId::from_parameter(n), &rhs, |b, r| {
            b.iter(|| solve_poisson(black_box(r)).unwrap())
        });
    }
    g.finish();
}

fn steppers(c: &mut Criterion) {
    let law = PressureLaw::new(1, 1.0);
    let mut g = c.benchmark_group("step");
    for n in [64, 128] {
        let grid = TorusGrid::square(n).unwrap();
        let init = make_initial(&InitialDataSpec::modal(1.0, 0.25, 0.05, vec![[1, 0], [1, 1]]), &grid, &law).unwrap();

        let p = SLParams::new(0.1, law, 0.25, 1e-4, 1.0);
        let mut sl = SlStepper::new(&p, &grid).unwrap();
        let mut w = init.wave.clone();
        g.bench_function(BenchmarkId::new("sl", n), |b| b.iter(|| sl.step(&mut w).unwrap()));

        let q = QDDParams::new(law, 0.25, 2e-6, 1.0);
        let qdd = QddStepper::new(&q, &grid).unwrap();
        let mut rho = init.state.rho.clone();
        g.bench_function(BenchmarkId::new("qdd", n), |b| b.iter(|| qdd.step(&mut rho).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, spectral, steppers);
criterion_main!(benches);
