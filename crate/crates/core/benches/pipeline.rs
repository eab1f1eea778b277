use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use roweisposes::dataset::{generate_synthetic, SyntheticSpec};
use roweisposes::exec::{self, Execution};
use roweisposes::pipeline::{evaluate_lopo, grid_from_pairs, preprocess_dataset, sweep, RunConfig, CORNER_GRID};
use roweisposes::rda::{fit, LabeledMatrix, RdaConfig, RoweisFactors};

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn mode_name(m: Execution) -> &'static str {
    match m {
        Execution::Sequential => "sequential",
        Execution::Parallel => "parallel",
    }
}

fn lopo(c: &mut Criterion) {
    let spec = SyntheticSpec::new(6, 5, 3, 8, 0.02);
    let (seqs, manifest) = generate_synthetic(&spec, 7).unwrap();
    let fp = manifest.preprocess_config().fingerprint();
    let prepared = preprocess_dataset(&manifest, &seqs, Execution::Sequential).unwrap();
    let mut group = c.benchmark_group("lopo_eval");
    group.sample_size(10);
    for mode in MODES {
        let cfg = RunConfig {
            execution: mode,
            ..Default::default()
        };
        group.bench_function(BenchmarkId::from_parameter(mode_name(mode)), |b| {
            b.iter(|| evaluate_lopo(&cfg, &prepared, &fp).unwrap())
        });
    }
    group.finish();

    let grid = grid_from_pairs(&CORNER_GRID).unwrap();
    let mut group = c.benchmark_group("corner_sweep");
    group.sample_size(10);
    for mode in MODES {
        let cfg = RunConfig {
            execution: mode,
            ..Default::default()
        };
        group.bench_function(BenchmarkId::from_parameter(mode_name(mode)), |b| {
            b.iter(|| sweep(&cfg, &grid, &prepared, &fp).unwrap())
        });
    }
    group.finish();
}

fn batch_fits(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (d, n, classes) = (45, 400, 6);
    let datasets: Vec<LabeledMatrix> = (0..16)
        .map(|_| {
            let labels: Vec<String> = (0..n).map(|k| format!("c{}", k % classes)).collect();
            let x = ndarray::Array2::from_shape_fn((d, n), |(i, k)| {
                (k % classes) as f64 * ((i % 7) as f64) + rng.random_range(-1.0..1.0)
            });
            LabeledMatrix::new(x, &labels).unwrap()
        })
        .collect();
    let factors: Vec<RoweisFactors> = grid_from_pairs(&[(0.0, 1.0), (1.0, 0.0), (0.5, 0.5), (1.0, 1.0)]).unwrap();
    let mut group = c.benchmark_group("batch_fits");
    group.sample_size(10);
    for mode in MODES {
        group.bench_function(BenchmarkId::from_parameter(mode_name(mode)), |b| {
            b.iter(|| {
                exec::map_range(mode, datasets.len() * factors.len(), |i| {
                    let cfg = RdaConfig {
                        factors: factors[i % factors.len()],
                        ..Default::default()
                    };
                    fit(&datasets[i / factors.len()], &cfg).unwrap().eigenvalues[0]
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, lopo, batch_fits);
criterion_main!(benches);
