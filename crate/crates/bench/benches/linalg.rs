//! Kernel construction, factorization and solves at knot-set sizes.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;
use std::hint::black_box;

use svc_core::covkernel::{
    cholesky_spd, kernel_matrix, solve_spd_vec, squared_distance_matrix, CoordMatrix, DEFAULT_JITTER,
};

fn grid(m: usize) -> CoordMatrix {
    let side = (m as f64).sqrt().ceil() as usize;
    CoordMatrix::new((0..m).map(|i| [(i % side) as f64, (i / side) as f64]).collect()).unwrap()
}

fn linalg(c: &mut Criterion) {
    let mut group = c.benchmark_group("linalg");
    for m in [49usize, 121, 441] {
        let coords = grid(m);
        let d = squared_distance_matrix(&coords, &coords).unwrap();
        let k = kernel_matrix(&d, 2.0).unwrap();
        let f = cholesky_spd(k.matrix(), &DEFAULT_JITTER).unwrap();
        let rhs = DVector::from_fn(m, |i, _| (i as f64).sin());

        group.bench_with_input(BenchmarkId::new("distance", m), &m, |b, _| {
            b.iter(|| squared_distance_matrix(black_box(&coords), &coords).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("kernel", m), &m, |b, _| {
            b.iter(|| kernel_matrix(black_box(&d), 2.0).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("cholesky", m), &m, |b, _| {
            b.iter(|| cholesky_spd(black_box(k.matrix()), &DEFAULT_JITTER).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("solve", m), &m, |b, _| {
            b.iter(|| solve_spd_vec(&f, black_box(&rhs)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, linalg);
criterion_main!(benches);
