//! `dpu`: command-line pipeline for diffractive seizure detection runs.

mod commands;
mod config;
mod run;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};

use commands::{Ctx, Outcome};
use config::Config;

#[derive(Parser, Debug)]
#[command(name = "dpu", version, about = "Diffractive photonic computing pipeline for EEG seizure detection")]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true, env = "DPU_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true, env = "DPU_SEED")]
    seed: Option<u64>,
    /// Run directory for outputs.
    #[arg(long, global = true, env = "DPU_OUT", default_value = "run")]
    out: PathBuf,
    /// Directory holding earlier outputs; defaults to --out.
    #[arg(long, global = true, env = "DPU_INPUT")]
    input: Option<PathBuf>,
    /// `key=value` override, applied last. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Verb {
    /// Window EDF recordings (or a synthetic one) into a labeled segment store.
    Ingest,
    /// Write a synthetic EDF recording and its seizure summary.
    Synth,
    /// Rank channels with a random forest and keep the top `select.k`.
    Select,
    /// Train the configured model on the training windows.
    Train,
    /// Evaluate a checkpoint and write a metrics report.
    Eval,
    /// Retrain downstream of layer 1 under an emulated bench aberration.
    Adapt,
    /// Throughput arithmetic.
    Ops,
    /// Collect reports and verify manifests.
    Report,
    /// Print the default configuration.
    Template,
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = Config::defaults(0);
    if let Some(p) = &cli.config {
        cfg.apply_file(p)?;
    }
    cfg.apply_env(|k| std::env::var(k).ok());
    for s in &cli.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {s:?}"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    let cfg = load_config(cli)?;
    let ctx = Ctx {
        input: cli.input.clone().unwrap_or_else(|| cli.out.clone()),
        out: cli.out.clone(),
        cfg,
    };
    match cli.verb {
        Verb::Ingest => commands::cmd_ingest(&ctx),
        Verb::Synth => commands::cmd_synth(&ctx),
        Verb::Select => commands::cmd_select(&ctx),
        Verb::Train => commands::cmd_train(&ctx),
        Verb::Eval => commands::cmd_eval(&ctx),
        Verb::Adapt => commands::cmd_adapt(&ctx),
        Verb::Ops => commands::cmd_ops(&ctx),
        Verb::Report => commands::cmd_report(&ctx),
        Verb::Template => unreachable!("handled before dispatch"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Verb::Template = cli.verb {
        print!("{}", config::template());
        return ExitCode::SUCCESS;
    }
    match dispatch(&cli) {
        Ok(out) if out.failures.is_empty() => {
            eprintln!("manifest_hash = {}", out.manifest_hash);
            ExitCode::SUCCESS
        }
        Ok(out) => {
            for f in &out.failures {
                eprintln!("error: {f}");
            }
            eprintln!("{} input(s) failed; manifest_hash = {}", out.failures.len(), out.manifest_hash);
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
