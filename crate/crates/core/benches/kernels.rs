//! Sequential versus rayon-parallel execution of the hot kernels and of a
//! full baseline training step.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use segunet::exec::{set_parallelism, Parallelism};
use segunet::model::{build_baseline, ModelConfig};
use segunet::nn::{conv2d_backward, conv2d_forward, Kernel};
use segunet::train::bce_loss;
use segunet::Tensor;

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Parallel)];

fn pattern(shape: [usize; 4]) -> Tensor {
    Tensor::from_fn(shape, |[b, c, y, x]| ((b * 7 + c * 5 + y * 3 + x) % 13) as f32 / 13.0 - 0.5)
}

fn conv(c: &mut Criterion) {
    let (ci, co) = (32, 64);
    let x = pattern([4, ci, 64, 64]);
    let w: Vec<f32> = (0..co * ci * 9).map(|i| ((i % 17) as f32 - 8.0) / 100.0).collect();
    let b = vec![0.01f32; co];
    let kernel = Kernel { weight: &w, bias: &b, in_channels: ci, out_channels: co, size: 3 };
    let gy = pattern([4, co, 64, 64]);

    let mut group = c.benchmark_group("conv3x3_4x32x64x64");
    group.sample_size(10);
    for (name, mode) in MODES {
        set_parallelism(mode);
        group.bench_function(BenchmarkId::new("forward", name), |bench| bench.iter(|| conv2d_forward(&x, kernel).unwrap()));
        group.bench_function(BenchmarkId::new("backward", name), |bench| {
            bench.iter(|| conv2d_backward(&x, kernel, &gy).unwrap())
        });
    }
    group.finish();
}

fn model(c: &mut Criterion) {
    let mut net = build_baseline(&ModelConfig::default());
    let x = pattern([4, 3, 64, 64]);
    let target = Tensor::from_fn([4, 1, 64, 64], |[_, _, y, x]| if (y / 8 + x / 8) % 2 == 0 { 1.0 } else { 0.0 });

    let mut group = c.benchmark_group("baseline_4x3x64x64");
    group.sample_size(10);
    for (name, mode) in MODES {
        set_parallelism(mode);
        group.bench_function(BenchmarkId::new("infer", name), |bench| bench.iter(|| net.infer(&x).unwrap()));
        group.bench_function(BenchmarkId::new("train_step", name), |bench| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            bench.iter(|| {
                let trace = net.forward(&x, &mut rng).unwrap();
                let (_, grad) = bce_loss(trace.output(), &target).unwrap();
                net.backward(&trace, &grad).unwrap()
            })
        });
    }
    group.finish();
    set_parallelism(Parallelism::Parallel);
}

criterion_group!(benches, conv, model);
criterion_main!(benches);
