//! `bifurcate`: synthetic telemetry, preparation, training, evaluation,
//! prediction and reporting from one entry point.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or contract violation.

use std::path::PathBuf;
use std::process::ExitCode;

use bifurcate::experiments::pipeline::{self, Workspace};
use bifurcate::experiments::PipelineConfig;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "bifurcate",
    version = bifurcate::BUILD_ID,
    about = "Joint survival-time and churn estimation from early session telemetry",
    propagate_version = true
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Pipeline configuration file, or `default` for the bundled one
    #[arg(long, global = true, default_value = "default", value_name = "PATH")]
    config: String,
    /// Root seed; overrides the configuration file
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads [default: available parallelism]
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,
    /// Working directory holding every stage's inputs and outputs
    #[arg(long, global = true, default_value = "run", value_name = "DIR")]
    workdir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate session telemetry into <workdir>/sessions
    Synth,
    /// Label, filter, balance and split sessions into <workdir>/prepared
    Prep,
    /// Train the Bifurcating Model on all prepared users into <workdir>/model
    Train,
    /// Run experiments into <workdir>/results
    Evaluate {
        /// Experiment to run (1, 2 or 3); repeatable [default: from the configuration]
        #[arg(long, value_name = "N", value_parser = clap::value_parser!(u8).range(1..=3))]
        experiment: Vec<u8>,
    },
    /// Score a session file with the trained model
    Predict {
        /// Directory with sessions.csv and sessions.meta.json [default: <workdir>/sessions]
        #[arg(long, value_name = "DIR")]
        sessions: Option<PathBuf>,
        /// Model checkpoint [default: <workdir>/model/bm.json]
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// Output CSV [default: <workdir>/predictions.csv]
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Monte-Carlo dropout samples per user [default: from the configuration]
        #[arg(long, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
        samples: Option<u32>,
    },
    /// Write a Markdown summary of the result tables to <workdir>/results/report.md
    Report,
}

fn run(cli: Cli) -> bifurcate::Result<()> {
    let mut cfg = PipelineConfig::load(&cli.global.config)?;
    if let Some(s) = cli.global.seed {
        cfg.seed = s;
    }
    let ws = Workspace::new(&cli.global.workdir);
    match cli.command {
        Command::Synth => {
            let rows = pipeline::synth(&cfg, &ws.sessions_dir())?;
            log::info!("wrote {rows} sessions to {}", ws.sessions_dir().display());
        }
        Command::Prep => {
            let meta = pipeline::prep(&cfg, &ws.sessions_dir(), &ws.prepared_dir())?;
            log::info!(
                "prepared {} users ({} after filtering) into {}",
                meta.plan.fold_assignments.len(),
                meta.filtered_users,
                ws.prepared_dir().display()
            );
        }
        Command::Train => {
            pipeline::train(&cfg, &ws.prepared_dir(), &ws.model_path())?;
            log::info!("saved {}", ws.model_path().display());
        }
        Command::Evaluate { experiment } => {
            let runs = if experiment.is_empty() {
                cfg.experiments.run.clone()
            } else {
                experiment
            };
            pipeline::evaluate(&cfg, &ws.prepared_dir(), &ws.results_dir(), &runs)?;
            log::info!("results in {}", ws.results_dir().display());
        }
        Command::Predict {
            sessions,
            model,
            out,
            samples,
        } => {
            let out = out.unwrap_or_else(|| ws.root.join("predictions.csv"));
            let n = samples.map_or(cfg.experiments.mc_samples, |s| s as usize);
            let preds = pipeline::predict(
                &model.unwrap_or_else(|| ws.model_path()),
                &ws.prepared_dir(),
                &sessions.unwrap_or_else(|| ws.sessions_dir()),
                &out,
                n,
                cfg.seed,
            )?;
            log::info!("scored {} users into {}", preds.len(), out.display());
        }
        Command::Report => {
            let meta = bifurcate::dataprep::load_fit_meta(&ws.prepared_dir())?;
            pipeline::report(&ws.results_dir(), &meta.game_names)?;
            log::info!("wrote {}", ws.results_dir().join(pipeline::REPORT_FILE).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.global.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.into()).build_global() {
            eprintln!("error: cannot start {n} workers: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
