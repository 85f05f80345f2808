//! Sequential against data-parallel execution for the hot kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pnr_pulsekit::analysis::{poisson_dist, reconstruct_povm, ConfusionMatrix, ProbeRecord, TomographyOptions};
use pnr_pulsekit::filter_ip::{inner_products, reference_trace};
use pnr_pulsekit::knn::{fit_knn, FeatureMode};
use pnr_pulsekit::simulator::{simulate, synthesize_batch, PulseShape, SimulationConfig, Simulated, SourceModel};
use pnr_pulsekit::{Exec, Label, LabeledBatch, PhotonDistribution};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn coherent(rate: f64, n: usize, seed: u64) -> LabeledBatch {
    match simulate(&SimulationConfig::new(SourceModel::Coherent { mu: 2.0 }, rate, n, seed), Exec::Parallel).unwrap() {
        Simulated::Single(b) => b,
        Simulated::Pair { .. } => unreachable!(),
    }
}

fn synthesize(c: &mut Criterion) {
    let cfg = SimulationConfig::new(SourceModel::Coherent { mu: 2.0 }, 800e3, 20_000, 1);
    let meta = cfg.meta().unwrap();
    let labels: Vec<Label> = (0..20_000).map(|i| Label::photons(i % 5)).collect();
    let shape = PulseShape::default();
    let mut g = c.benchmark_group("synthesize_20k");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| synthesize_batch(&labels, &shape, &meta, 4, 7, exec).unwrap())
        });
    }
    g.finish();
}

fn ip(c: &mut Criterion) {
    let data = coherent(100e3, 20_000, 2);
    let reference = reference_trace(data.batch());
    let mut g = c.benchmark_group("inner_products_20k");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| inner_products(data.batch(), &reference, exec).unwrap())
        });
    }
    g.finish();
}

fn knn(c: &mut Criterion) {
    let training = coherent(800e3, 20_000, 3);
    let test = coherent(800e3, 2_000, 4);
    let model = fit_knn(&training, 5, FeatureMode::FullTrace, Exec::Parallel).unwrap();
    let mut g = c.benchmark_group("knn_predict_2k");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| model.predict(test.batch(), exec).unwrap()));
    }
    g.finish();
}

fn bootstrap(c: &mut Criterion) {
    let truth = ConfusionMatrix::binomial_loss(0.85, 6).unwrap();
    let probes: Vec<ProbeRecord> = [0.3, 1.0, 2.0, 3.5, 5.0, 7.0, 9.0]
        .iter()
        .map(|&mu| {
            let p = truth.apply(&poisson_dist(mu, 6).unwrap().probs);
            let tail = (1.0 - p.iter().sum::<f64>()).max(0.0);
            ProbeRecord { mu, mu_sigma: 0.05, measured: PhotonDistribution::with_unclassified(p, tail).unwrap(), n_pulses: 100_000 }
        })
        .collect();
    let mut g = c.benchmark_group("tomography_bootstrap_16");
    g.sample_size(10);
    for (name, exec) in MODES {
        let opts = TomographyOptions { bootstrap: 16, exec, ..Default::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| reconstruct_povm(&probes, 6, 6, &opts).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, synthesize, ip, knn, bootstrap);
criterion_main!(benches);
