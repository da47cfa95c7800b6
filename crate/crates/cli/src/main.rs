use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use mmevent::commands::{self, Overrides, Session};
use mmevent::config::ExperimentConfig;
use mmevent::error::{config_error, exit_code};
use mmevent_core::evaluation::ReportFormat;

/// Multimodal social event classification experiments.
#[derive(Debug, Parser)]
#[command(name = "mmevent", version)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, short, global = true, default_value = "mmevent.toml")]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse metadata and write the corpus store.
    Ingest,
    /// Compute and cache feature vectors.
    Extract {
        /// Comma-separated subset of the configured features.
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
    },
    /// Grid search, then train the best pipeline on the development split.
    Train,
    /// Score a trained pipeline and write reports.
    Evaluate {
        #[arg(long)]
        pipeline: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Write per-record predictions as CSV.
    Predict {
        #[arg(long)]
        pipeline: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Re-render a JSON report.
    Report {
        input: PathBuf,
        #[arg(long, default_value = "text")]
        format: String,
    },
}

fn session(cli: &Cli) -> Result<Session> {
    let config = ExperimentConfig::load(&cli.config)?;
    let overrides = Overrides {
        seed: cli.seed,
        workers: cli.workers,
        out: cli.out.clone(),
    };
    let session = Session::new(config, &overrides);
    if session.config.workers > 0 {
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(session.config.workers)
            .build_global();
    }
    Ok(session)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Report { input, format } => {
            let format: ReportFormat = format.parse().map_err(|e| config_error(format!("{e}")))?;
            print!("{}", commands::report(input, format)?);
        }
        Command::Ingest => {
            let s = session(&cli)?;
            print!("{}", commands::ingest(&s)?.render());
        }
        Command::Extract { features } => {
            let s = session(&cli)?;
            print!(
                "{}",
                commands::render_extract(&commands::extract(&s, features)?)
            );
        }
        Command::Train => {
            let s = session(&cli)?;
            let t = commands::train(&s)?;
            println!(
                "best of {} grid points: {}",
                t.grid_points,
                commands::describe_classifier(&t.best)
            );
            if let Some((mean, std)) = t.cv {
                println!("cross-validated score: {mean:.4} +/- {std:.4}");
            }
            println!("pipeline: {} ({})", t.path.display(), t.descriptor_hash);
        }
        Command::Evaluate { pipeline, split } => {
            let s = session(&cli)?;
            let path = pipeline.clone().unwrap_or_else(|| s.pipeline_path());
            let e = commands::evaluate(&s, &path, split)?;
            println!("{}", commands::headline(&e.report));
            for p in &e.written {
                println!("wrote {}", p.display());
            }
        }
        Command::Predict {
            pipeline,
            split,
            output,
        } => {
            let s = session(&cli)?;
            let path = pipeline.clone().unwrap_or_else(|| s.pipeline_path());
            let (out, n) = commands::predict(&s, &path, split, output.as_deref())?;
            println!("wrote {n} predictions to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
