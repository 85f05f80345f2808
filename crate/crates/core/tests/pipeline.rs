use pnr_pulsekit::analysis::{class_accuracy, poisson_dist, reconstruct_povm, ConfusionMatrix, ProbeRecord, TomographyOptions};
use pnr_pulsekit::filter_ip::{classify_ip, ValleyParams};
use pnr_pulsekit::hdbscan::{fit, ClusterModel, HdbscanParams};
use pnr_pulsekit::knn::{build_training_set, fit_knn, load_model, save_model, FeatureMode};
use pnr_pulsekit::pca::PcaModel;
use pnr_pulsekit::simulator::{simulate, SimulationConfig, Simulated, SourceModel};
use pnr_pulsekit::{Exec, LabeledBatch, PhotonDistribution};

fn coherent(mu: f64, rate: f64, n: usize, seed: u64, exec: Exec) -> LabeledBatch {
    match simulate(&SimulationConfig::new(SourceModel::Coherent { mu }, rate, n, seed), exec).unwrap() {
        Simulated::Single(b) => b,
        Simulated::Pair { .. } => unreachable!(),
    }
}

#[test]
fn simulation_does_not_depend_on_execution_mode() {
    let a = coherent(2.0, 400e3, 5000, 9, Exec::Sequential);
    let b = coherent(2.0, 400e3, 5000, 9, Exec::Parallel);
    assert_eq!(a, b);
}

#[test]
fn first_factor_score_orders_photon_numbers() {
    let data = coherent(1.5, 100e3, 20_000, 3, Exec::Parallel);
    let pca = PcaModel::fit(data.batch()).unwrap();
    let scores = pca.transform(data.batch(), 2, Exec::Parallel).unwrap();
    let means: Vec<f64> = (0..5)
        .map(|n| {
            let s: Vec<f64> = scores
                .rows()
                .zip(data.labels())
                .filter(|(_, l)| l.count() == Some(n))
                .map(|(r, _)| r[0])
                .collect();
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect();
    assert!(means.windows(2).all(|w| w[0] < w[1]), "{means:?}");
}

#[test]
fn knn_recovers_overlapped_traces_and_survives_a_save() {
    let calib = coherent(2.0, 100e3, 20_004, 5, Exec::Parallel);
    let ip = classify_ip(calib.batch(), &ValleyParams::default(), Exec::Parallel).unwrap();
    let calib = LabeledBatch::new(calib.batch().clone(), ip.labels().to_vec()).unwrap();
    let training = build_training_set(&calib, 800e3, 4, 6).unwrap();
    let model = fit_knn(&training, 5, FeatureMode::FullTrace, Exec::Parallel).unwrap();
    let test = coherent(2.0, 800e3, 5000, 7, Exec::Parallel);
    let pred = model.predict(test.batch(), Exec::Parallel).unwrap();
    for c in class_accuracy(&pred, test.labels()).unwrap().iter().filter(|c| c.photons <= 3) {
        assert!(c.accuracy >= 0.9, "{c:?}");
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("knn.json");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back.predict(test.batch(), Exec::Sequential).unwrap(), pred);
}

#[test]
fn cluster_model_predicts_its_own_points_and_survives_a_save() {
    let data = coherent(1.0, 100e3, 3000, 8, Exec::Parallel);
    let pca = PcaModel::fit(data.batch()).unwrap();
    let scores = pca.transform(data.batch(), 2, Exec::Parallel).unwrap();
    let model = fit(scores.as_slice(), 2, &HdbscanParams::default(), Exec::Parallel).unwrap();
    assert!(model.n_clusters() >= 3);
    let own = model.predict(scores.as_slice(), Exec::Parallel).unwrap();
    assert_eq!(own, model.labels());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.hdb");
    model.save(&path).unwrap();
    let back = ClusterModel::load(&path).unwrap();
    assert_eq!(back.predict(scores.as_slice(), Exec::Sequential).unwrap(), own);
    // the sparse tail (n >= 3 at mu = 1) shares one cluster; the bulk is exact
    let low: Vec<_> = own.iter().zip(data.labels()).filter(|(a, _)| a.count().is_some_and(|n| n <= 2)).collect();
    let correct = low.iter().filter(|(a, b)| a == b).count();
    assert!(correct as f64 >= 0.99 * low.len() as f64);
}

#[test]
fn tomography_objective_never_increases() {
    let truth = ConfusionMatrix::binomial_loss(0.8, 6).unwrap();
    let probes: Vec<ProbeRecord> = [0.3, 1.0, 2.0, 3.5, 5.0, 7.0, 9.0]
        .iter()
        .map(|&mu| {
            let p = truth.apply(&poisson_dist(mu, 6).unwrap().probs);
            let tail = (1.0 - p.iter().sum::<f64>()).max(0.0);
            ProbeRecord { mu, mu_sigma: 0.0, measured: PhotonDistribution::with_unclassified(p, tail).unwrap(), n_pulses: 100_000 }
        })
        .collect();
    let opts = TomographyOptions { bootstrap: 0, record_objective: true, ..Default::default() };
    let r = reconstruct_povm(&probes, 6, 6, &opts).unwrap();
    assert!(r.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(r.theta.max_abs_diff(&truth) < 5e-3);
}
