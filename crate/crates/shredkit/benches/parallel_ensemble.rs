//! Compares the rayon path of map_items / run_ensemble against the
//! sequential fallback (workers = 1). Build with --no-default-features to
//! time the build without rayon at all.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use shredkit::datasets::gen_low_rank;
use shredkit::harness::{DatasetSpec, ExperimentConfig, Method, Placement, run_ensemble};
use shredkit::linalg::{svd_thin, Matrix};
use shredkit::map_items;
use shredkit::models::TrainConfig;

fn svd_workload(n_items: usize) -> Vec<Matrix> {
    (0..n_items)
        .map(|i| {
            let field = gen_low_rank(40, 60, &[3.0, 2.0, 1.0], &[1.0, 2.3, 3.7], i as u64).unwrap();
            Matrix::from_columns(field.snapshots()).unwrap()
        })
        .collect()
}

fn bench_map_items(c: &mut Criterion) {
    let mut group = c.benchmark_group("map_items_svd");
    group.sample_size(10);
    for workers in [1usize, 4] {
        group.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter(|| {
                let items = svd_workload(16);
                map_items(items, w, |m| svd_thin(&m).unwrap().singular_values[0])
            });
        });
    }
    group.finish();
}

fn bench_qr_pod_ensemble(c: &mut Criterion) {
    let cfg = ExperimentConfig {
        dataset: DatasetSpec::TravelingWaves {
            height: 12,
            width: 12,
            t_len: 200,
            n_modes: 4,
            dt: 1.0,
            seed: 11,
        },
        method: Method::QrPod,
        placement: Placement::Qr,
        sensor_counts: vec![4],
        noise_alphas: vec![0.0],
        lag: 20,
        trials: 4,
        base_seed: 1,
        train: TrainConfig::default(),
        r_max: Some(4),
        hidden_size: 16,
        lstm_layers: 1,
        decoder_widths: vec![32],
        split_fractions: [0.7, 0.15, 0.15],
        train_frac: 0.85,
        val_len: 10,
        forecast_horizon: 5,
        forecast_runs: 2,
    };
    let mut group = c.benchmark_group("qr_pod_ensemble");
    group.sample_size(10);
    for workers in [1usize, 4] {
        group.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter(|| run_ensemble(&cfg, w).unwrap());
        });
    }
    group.finish();
}

criterion_group!(benches, bench_map_items, bench_qr_pod_ensemble);
criterion_main!(benches);
