use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use svgf_bench::target;
use svgf_core::meanfield::{upwind_step, velocity_field, VelocityOperator};
use svgf_core::particles::{svgd_directions, AskeyKernel, ForceMethod, ParticleEnsemble};
use svgf_core::spectral::{FourierPlan, GridField};
use svgf_core::fields::FourierPotential;

fn fft(c: &mut Criterion) {
    let mut group = c.benchmark_group("fft_forward");
    for (dim, n) in [(1usize, 2048usize), (1, 16384), (2, 256)] {
        let plan = FourierPlan::new(dim, n).unwrap();
        let field = GridField::from_fn(dim, n, |x| x.iter().map(|v| (6.0 * v).sin()).sum()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(format!("d{dim}_n{n}")), &field, |b, f| {
            b.iter(|| plan.forward_real(black_box(f.values())))
        });
    }
    group.finish();
}

fn velocity(c: &mut Criterion) {
    let mut group = c.benchmark_group("velocity_apply");
    for n in [512usize, 2048, 8192] {
        let t = target(1, n, 1.5, 1.0);
        let rho = GridField::constant(1, n, 1.0).unwrap();
        let mut op = VelocityOperator::new(&t.grad_v, 1.5, false).unwrap();
        let mut out = vec![vec![0.0; n]];
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| op.apply(black_box(rho.values()), t.pi.values(), &mut out))
        });
    }
    group.finish();
}

fn upwind(c: &mut Criterion) {
    let n = 2048;
    let t = target(1, n, 1.5, 1.0);
    let rho = GridField::constant(1, n, 1.0).unwrap();
    let v = velocity_field(&rho, &t.pi, &t.grad_v, 1.5).unwrap();
    c.bench_function("upwind_step_n2048", |b| {
        b.iter(|| upwind_step(black_box(&rho), &v, 1e-4).unwrap())
    });
}

fn svgd(c: &mut Criterion) {
    let mut group = c.benchmark_group("svgd_directions");
    group.sample_size(20);
    let t = target(2, 64, 2.0, 20.0);
    let pot = FourierPotential::from_grid(&t.potential).unwrap();
    let kernel = AskeyKernel::new(2).unwrap();
    let ens = ParticleEnsemble::uniform_random(2, 2000, 0.05, 8).unwrap();
    for method in [ForceMethod::CellList, ForceMethod::Naive] {
        group.bench_function(format!("{method:?}_n2000"), |b| {
            b.iter(|| svgd_directions(black_box(&ens), &pot, &kernel, method).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, fft, velocity, upwind, svgd);
criterion_main!(benches);
