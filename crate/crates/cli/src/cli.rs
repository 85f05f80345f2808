use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "pnr-pulsekit", version, about = "Photon-number classification of TES voltage traces")]
pub struct Cli {
    /// JSON config: a `simulate` block for `simulate`, a full document for `pipeline`.
    #[arg(long, value_name = "FILE", global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory that relative output paths are written into.
    #[arg(long = "out", value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true, env = "PNR_PULSEKIT_THREADS")]
    pub threads: Option<usize>,
    /// Log filter, e.g. `info` or `pnr_pulsekit=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a coherent or TMSV acquisition and write trace bundles.
    Simulate(SimulateArgs),
    /// Inner-product classification with histogram valley thresholds.
    ClassifyIp(ClassifyIpArgs),
    /// Fit (or apply) PCA and write factor scores.
    Pca(PcaArgs),
    /// Build overlapped training data from a calibration bundle and fit KNN.
    KnnTrain(KnnTrainArgs),
    /// Label a bundle with a trained KNN model.
    KnnPredict(KnnPredictArgs),
    /// HDBSCAN on factor scores with photon-number assignment.
    Cluster(ClusterArgs),
    /// Signal distribution conditioned on an idler photon number.
    Herald(HeraldArgs),
    /// Detector tomography from coherent probes.
    Tomography(TomographyArgs),
    /// Distances and fidelities.
    #[command(subcommand)]
    Metric(MetricCommand),
    /// Run the stages declared in `--config` end to end.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceKind {
    Coherent,
    Tmsv,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub source: Option<SourceKind>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub eta_signal: Option<f64>,
    #[arg(long)]
    pub eta_idler: Option<f64>,
    /// Repetition rate in Hz.
    #[arg(long)]
    pub rep_rate: Option<f64>,
    #[arg(long)]
    pub n_pulses: Option<usize>,
    #[arg(long)]
    pub history_depth: Option<usize>,
    /// Gaussian noise in volts.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Bundle name; TMSV adds `.signal` / `.idler`.
    #[arg(long, default_value = "sim")]
    pub name: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyIpArgs {
    #[arg(long = "in", value_name = "BUNDLE")]
    pub input: PathBuf,
    #[arg(long, default_value = "labels.csv")]
    pub out: PathBuf,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub smooth: Option<usize>,
    #[arg(long)]
    pub prominence: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PcaArgs {
    #[arg(long = "in", value_name = "BUNDLE")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub components: usize,
    #[arg(long, default_value = "scores.csv")]
    pub scores_out: PathBuf,
    /// Defaults to `<bundle name>.pca.json`.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    /// Apply an existing model instead of fitting.
    #[arg(long, conflicts_with = "model_out")]
    pub model: Option<PathBuf>,
    /// Fit on the first N traces only.
    #[arg(long)]
    pub fit_traces: Option<usize>,
}

#[derive(Debug, Args)]
pub struct KnnTrainArgs {
    #[arg(long, value_name = "BUNDLE")]
    pub calib: PathBuf,
    /// Calibration labels; defaults to the labels stored in the bundle.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Target repetition rate in Hz.
    #[arg(long)]
    pub target_rate: f64,
    #[arg(long, default_value_t = pnr_pulsekit::knn::DEFAULT_K)]
    pub k: usize,
    /// `full` or `pca:N`.
    #[arg(long, default_value = "full")]
    pub features: String,
    #[arg(long, default_value_t = pnr_pulsekit::simulator::DEFAULT_HISTORY_DEPTH)]
    pub history_depth: usize,
    #[arg(long, default_value = "m.knn")]
    pub model_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct KnnPredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in", value_name = "BUNDLE")]
    pub input: PathBuf,
    #[arg(long, default_value = "labels.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub min_cluster_size: usize,
    #[arg(long, default_value_t = 10)]
    pub min_samples: usize,
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    #[arg(long, default_value = "m.hdb")]
    pub model_out: PathBuf,
    #[arg(long, default_value = "labels.csv")]
    pub labels_out: PathBuf,
    /// JSON object mapping cluster id to photon number; replaces the automatic map.
    #[arg(long)]
    pub photon_map: Option<PathBuf>,
    #[arg(long, default_value_t = pnr_pulsekit::hdbscan::DEFAULT_MERGE_GAP_FRACTION)]
    pub merge_gap: f64,
    /// `first-score` or `fitted`.
    #[arg(long, default_value = "first-score")]
    pub map_axis: String,
    /// Fit on the first N rows and predict the rest.
    #[arg(long)]
    pub fit_rows: Option<usize>,
}

#[derive(Debug, Args)]
pub struct HeraldArgs {
    #[arg(long)]
    pub signal: PathBuf,
    #[arg(long)]
    pub idler: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub truncation: Option<usize>,
    #[arg(long, default_value = "dist.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TomographyArgs {
    /// JSON list of `{mu, mu_sigma, n_pulses, labels_csv}`.
    #[arg(long)]
    pub probes: PathBuf,
    #[arg(long = "N", default_value_t = 16)]
    pub n_reported: usize,
    #[arg(long = "M", default_value_t = 16)]
    pub m_actual: usize,
    #[arg(long, default_value_t = 100)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 50_000)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
    #[arg(long, default_value = "theta.json")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum MetricCommand {
    /// Total variation distance.
    Tvd(DistPair),
    /// Classical fidelity of two distributions.
    DistFidelity(DistPair),
    /// Average row fidelity of two confusion matrices.
    Fidelity(FidelityArgs),
}

/// Each side is `poisson:MU`, a labels CSV or a distribution JSON.
#[derive(Debug, Args)]
pub struct DistPair {
    #[arg(long)]
    pub p: String,
    #[arg(long)]
    pub q: String,
    #[arg(long)]
    pub truncation: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmptyRows {
    BothZeroIsOne,
    Exclude,
}

#[derive(Debug, Args)]
pub struct FidelityArgs {
    /// Tomography output or bare confusion matrix JSON.
    #[arg(long)]
    pub theta: PathBuf,
    /// Matrix JSON or `binomial:ETA`.
    #[arg(long)]
    pub reference: String,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub m_max: Option<usize>,
    #[arg(long, value_enum, default_value = "both-zero-is-one")]
    pub empty_rows: EmptyRows,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long = "out", value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn root_out_and_subcommand_out_are_separate() {
        let cli = Cli::try_parse_from([
            "pnr-pulsekit", "--out", "runs", "classify-ip", "--in", "b", "--out", "l.csv", "--seed", "3",
        ])
        .unwrap();
        assert_eq!(cli.out_dir, Some(PathBuf::from("runs")));
        assert_eq!(cli.seed, Some(3));
        let Command::ClassifyIp(a) = cli.command else { panic!() };
        assert_eq!(a.out, PathBuf::from("l.csv"));
    }

    #[test]
    fn metric_subcommands_parse() {
        let cli = Cli::try_parse_from(["pnr-pulsekit", "metric", "tvd", "--p", "a.json", "--q", "poisson:1"]).unwrap();
        assert!(matches!(cli.command, Command::Metric(MetricCommand::Tvd(_))));
    }
}
