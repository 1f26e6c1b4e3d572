use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use expcli::{run_duration_sweep, run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "unlearn-prep",
    version,
    about = "Train, unlearn and measure unlearning readiness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the config's `output`, else `runs/<task>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Preparation-duration sweep over the config's `sweep.prepared_epochs`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-token losses of a text under a saved language model.
    TokenReport {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        text: PathBuf,
        /// Vocabulary JSON; defaults to `vocab.json` next to the model.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(cfg: &ExperimentConfig, out: Option<PathBuf>, fallback: &str) -> PathBuf {
    out.or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(fallback))
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let task = serde_json::to_value(cfg.task)?;
            let dir = out_dir(&cfg, out, task.as_str().unwrap_or("run"));
            let art = run_experiment(&cfg, &dir)?;
            println!("{}", serde_json::to_string_pretty(&art.summary_data.mean)?);
            println!("artifacts in {}", art.dir.display());
        }
        Command::Sweep { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = out_dir(&cfg, out, "sweep");
            let s = run_duration_sweep(&cfg, &dir)?;
            for r in &s.rows {
                let steps = r
                    .steps_to_threshold
                    .map_or("not reached".to_string(), |v| v.to_string());
                println!("M={:>2} steps={steps}", r.prepared_epochs);
            }
            match s.spearman {
                Some(rho) => println!("spearman(M, steps) = {rho:.3}"),
                None => println!("spearman(M, steps) undefined"),
            }
            println!("artifacts in {}", dir.display());
        }
        Command::TokenReport {
            model,
            text,
            vocab,
            out,
        } => {
            let vocab = vocab.unwrap_or_else(|| model.with_file_name("vocab.json"));
            let json = expcli::run::token_report_command(&model, &vocab, &text)?;
            match out {
                Some(path) => std::fs::write(&path, json)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{json}"),
            }
        }
    }
    Ok(())
}
