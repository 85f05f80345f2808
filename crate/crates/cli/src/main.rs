mod cli;
mod commands;
mod error;
mod io;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pnr_pulsekit::Exec;

use crate::cli::{Cli, Command};
use crate::commands::Ctx;
use crate::error::{CliError, CliResult};

fn run(cli: Cli) -> CliResult<serde_json::Value> {
    let mut ctx = Ctx {
        out_dir: cli.out_dir.clone().unwrap_or_else(|| PathBuf::from(".")),
        seed: cli.seed,
        config: cli.config.clone(),
        exec: Exec::Parallel,
    };
    match &cli.command {
        Command::Simulate(a) => commands::cmd_simulate(&ctx, a),
        Command::ClassifyIp(a) => commands::cmd_classify_ip(&ctx, a),
        Command::Pca(a) => commands::cmd_pca(&ctx, a),
        Command::KnnTrain(a) => commands::cmd_knn_train(&ctx, a),
        Command::KnnPredict(a) => commands::cmd_knn_predict(&ctx, a),
        Command::Cluster(a) => commands::cmd_cluster(&ctx, a),
        Command::Herald(a) => commands::cmd_herald(&ctx, a),
        Command::Tomography(a) => commands::cmd_tomography(&ctx, a),
        Command::Metric(m) => commands::cmd_metric(&ctx, m),
        Command::Pipeline(a) => {
            let path = cli.config.as_deref().ok_or_else(|| CliError::config("pipeline needs --config FILE"))?;
            let cfg = pipeline::PipelineConfig::load(path, cli.seed)?;
            let out = a
                .out_dir
                .clone()
                .or(cli.out_dir)
                .or_else(|| cfg.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("run"));
            ctx.out_dir = out;
            pipeline::run_pipeline(&cfg, &ctx.out_dir, ctx.exec)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).format_timestamp(None).init();
    if let Some(n) = cli.threads {
        if n == 0 || !pnr_pulsekit::par::init_threads(n) {
            log::warn!("thread cap {n} not applied");
        }
    }
    match run(cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
