//! Dense kernels with the rayon pool against a single worker thread.
//!
//! Without the `parallel` feature every kernel runs on the calling thread
//! and only the sequential group is measured.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use tnconv::network::rng::UniformSource;
use tnconv::{contract, svd_split, DenseTensor, Matrix, TruncationPolicy};

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    Matrix::new(rows, cols, UniformSource::new(seed).fill(rows * cols)).unwrap()
}

fn random_tensor(labels: &[&str], shape: &[usize], seed: u64) -> DenseTensor {
    let len = shape.iter().product();
    DenseTensor::new(labels.to_vec(), shape.to_vec(), UniformSource::new(seed).fill(len)).unwrap()
}

fn run_in(mode: &str, f: impl FnOnce() + Send) {
    #[cfg(feature = "parallel")]
    if mode == "sequential" {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        return pool.install(f);
    }
    let _ = mode;
    f()
}

fn modes() -> &'static [&'static str] {
    if tnconv::par::is_parallel() {
        &["parallel", "sequential"]
    } else {
        &["sequential"]
    }
}

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for &n in &[128usize, 360] {
        let a = random_matrix(n, n, 1);
        let b = random_matrix(n, n, 2);
        for &mode in modes() {
            group.bench_with_input(BenchmarkId::new(mode, n), &n, |bench, _| {
                run_in(mode, || bench.iter(|| black_box(a.matmul(&b).unwrap())))
            });
        }
    }
    group.finish();
}

fn contraction(c: &mut Criterion) {
    let mut group = c.benchmark_group("contract");
    // A ring node pair as fused by one conversion step.
    let left = random_tensor(&["a", "s1", "x"], &[36, 10, 6], 3);
    let right = random_tensor(&["x", "s2", "b"], &[6, 10, 36], 4);
    for &mode in modes() {
        group.bench_function(mode, |bench| {
            run_in(mode, || bench.iter(|| black_box(contract(&left, &right, &["x"]).unwrap())))
        });
    }
    group.finish();
}

fn svd(c: &mut Criterion) {
    let mut group = c.benchmark_group("svd_split");
    group.sample_size(20);
    for &(m, n) in &[(100usize, 100usize), (360, 360)] {
        let a = random_matrix(m, n, 5);
        for &mode in modes() {
            group.bench_with_input(BenchmarkId::new(mode, format!("{m}x{n}")), &m, |bench, _| {
                run_in(mode, || bench.iter(|| black_box(svd_split(&a, &TruncationPolicy::Exact).unwrap())))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, matmul, contraction, svd);
criterion_main!(benches);
