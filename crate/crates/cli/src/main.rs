mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{FileConfig, Overrides, PipelineConfig, TIMESTAMP_ENV};

/// Clinical notes to FHIR R4 patient digital twins.
#[derive(Debug, Parser)]
#[command(name = "ehrtwin", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the corpus split.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Split ratios as TRAIN,VALIDATION,TEST.
    #[arg(long, global = true, value_parser = parse_ratios)]
    split: Option<[f64; 3]>,
    /// Skip concept normalization.
    #[arg(long, global = true)]
    no_normalize: bool,
    /// Skip relation extraction.
    #[arg(long, global = true)]
    no_relations: bool,
    /// Keep resources that fail validation.
    #[arg(long, global = true)]
    no_validate: bool,
    /// Map mentions to resources without coding or relations.
    #[arg(long, global = true)]
    naive: bool,
    /// Process everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a corpus (notes, gold, references, split manifest) from tables.
    Synthesize { tables: PathBuf },
    /// Write mention and relation annotations for every note.
    Extract { notes: PathBuf },
    /// Write one twin bundle and issue report per patient.
    Twin { notes: PathBuf },
    /// Score the pipeline against a synthesized corpus.
    Evaluate { corpus: PathBuf },
}

fn parse_ratios(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected three ratios, got {}", v.len()))
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.common.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let c = cli.common;
    let flags = Overrides {
        out: c.out,
        seed: c.seed,
        split: c.split,
        no_normalize: c.no_normalize,
        no_relations: c.no_relations,
        no_validate: c.no_validate,
        naive: c.naive,
        sequential: c.sequential,
    };
    let cfg = PipelineConfig::resolve(file, flags, std::env::var(TIMESTAMP_ENV).ok())?;
    match cli.command {
        Command::Synthesize { tables } => {
            let m = commands::synthesize(&tables, &cfg)?;
            log::info!(
                "stage=synthesize notes={} train={} validation={} test={} skipped={}",
                m.notes,
                m.train.len(),
                m.validation.len(),
                m.test.len(),
                m.skipped.len()
            );
        }
        Command::Extract { notes } => {
            let n = commands::extract(&notes, &cfg)?;
            log::info!("stage=extract files={n}");
        }
        Command::Twin { notes } => {
            let n = commands::twin(&notes, &cfg)?;
            log::info!("stage=twin patients={n}");
        }
        Command::Evaluate { corpus } => {
            commands::evaluate(&corpus, &cfg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
