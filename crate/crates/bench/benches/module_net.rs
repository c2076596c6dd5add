use std::hint::black_box;

use closure_core::dsl::catalog;
use closure_core::module_net::{
    conv3x3, tensor_nmn_forward, vector_nmn_backward, vector_nmn_forward, FeatureMap, ModuleConfig, ModuleParams,
    TensorVariant,
};
use closure_core::rng::stream;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn kernels(c: &mut Criterion) {
    let config = ModuleConfig::default();
    let channels = config.channels;
    let params = ModuleParams::random(config, &catalog(), 1, 0.1).unwrap();
    let mut rng = stream(1, 0, 0);
    let h_x = FeatureMap::random(channels, 14, 14, 1.0, &mut rng);
    let left_map = FeatureMap::random(channels, 14, 14, 1.0, &mut rng);
    let right_map = FeatureMap::random(channels, 14, 14, 1.0, &mut rng);
    let left = vec![0.5; channels];
    let right = vec![-0.25; channels];
    let weights = FeatureMap::random(channels, channels, 9, 0.1, &mut rng).data().to_vec();

    c.bench_function("conv3x3 8x14x14", |b| b.iter(|| black_box(conv3x3(&weights, channels, &h_x).unwrap())));
    c.bench_function("vector_nmn_forward binary", |b| {
        b.iter(|| black_box(vector_nmn_forward(&params, "union", &h_x, Some(&left), Some(&right), 2).unwrap()))
    });
    c.bench_function("vector_nmn_backward binary", |b| {
        let grad = vec![1.0; channels];
        b.iter(|| black_box(vector_nmn_backward(&params, "union", &h_x, Some(&left), Some(&right), 2, &grad).unwrap()))
    });

    let mut group = c.benchmark_group("tensor_nmn_forward");
    for variant in TensorVariant::ALL {
        group.bench_with_input(BenchmarkId::from_parameter(variant), &variant, |b, &variant| {
            b.iter(|| {
                black_box(
                    tensor_nmn_forward(&params, "intersect", Some(&left_map), Some(&right_map), &h_x, variant).unwrap(),
                )
            })
        });
    }
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
