//! `ladder` — ladder network experiments on MNIST from the command line.
//!
//! Subcommands: `data` (verify and cache the dataset), `train` (one seed),
//! `replicate` (all seeds, aggregated report), `search` (hyperparameter
//! search), `table` (replicate a variant grid and emit CSV).
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 divergence, 1 anything else.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use config::{ConfigFile, ExperimentConfig, FlagValues};
use ladder::error::{Error, ErrorClass, Result};
use ladder::variants::Variant;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "ladder", version, about = "Ladder network experiments on MNIST")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// Number of training seeds, used as 0..N
    #[arg(long)]
    seeds: Option<usize>,
    /// Scale preset: desk or paper
    #[arg(long)]
    preset: Option<String>,
    /// Output directory for reports, logs, and checkpoints
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel workers for multi-seed and search runs
    #[arg(long)]
    workers: Option<usize>,
    /// Numeric precision: f32 or f64
    #[arg(long)]
    precision: Option<String>,
    /// Directory holding the MNIST files
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// JSON config file; values in the file override the flags
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Experiment variant, e.g. vanilla, baseline, gauss, amlp[2,2,2]
    #[arg(long)]
    variant: Option<String>,
    /// Labeled example count: 100, 1000, or 60000
    #[arg(long)]
    labels: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Clone)]
struct TableArgs {
    /// Comma-separated variant list, or "all"
    #[arg(long, value_delimiter = ',')]
    variants: Vec<String>,
    /// Comma-separated label counts
    #[arg(long, value_delimiter = ',', default_value = "100")]
    labels: Vec<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the MNIST files and build the decompressed cache
    Data {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train a single seed; writes a checkpoint, step log, and summary
    Train(RunArgs),
    /// Train every seed and aggregate a report with AER and SE
    Replicate(RunArgs),
    /// Search the variant's hyperparameter space
    Search(RunArgs),
    /// Replicate a variant grid and emit a results table as CSV
    Table(TableArgs),
}

fn parse_flags(args: &RunArgs) -> Result<FlagValues> {
    let common = flags_from_common(&args.common)?;
    Ok(FlagValues {
        variant: args.variant.as_deref().map(str::parse).transpose()?,
        labels: args.labels,
        ..common
    })
}

fn flags_from_common(common: &CommonArgs) -> Result<FlagValues> {
    Ok(FlagValues {
        variant: None,
        labels: None,
        seeds: common.seeds,
        preset: common.preset.as_deref().map(str::parse).transpose()?,
        precision: common.precision.as_deref().map(str::parse).transpose()?,
        workers: common.workers,
        data_dir: common.data_dir.clone(),
        out: common.out.clone(),
    })
}

fn load_file(common: &CommonArgs) -> Result<ConfigFile> {
    match &common.config {
        Some(path) => ConfigFile::load(path),
        None => Ok(ConfigFile::default()),
    }
}

fn resolve(args: &RunArgs) -> Result<ExperimentConfig> {
    ExperimentConfig::resolve(&parse_flags(args)?, &load_file(&args.common)?)
}

fn run_table(args: &TableArgs) -> Result<()> {
    let file = load_file(&args.common)?;
    if file.variant.is_some() || file.labels.is_some() {
        return Err(Error::Config(
            "table reads its grid from --variants/--labels; \
             remove `variant` and `labels` from the config file"
                .into(),
        ));
    }
    let variants: Vec<Variant> = if args.variants.iter().any(|v| v == "all") {
        Variant::all()
    } else {
        args.variants.iter().map(|v| v.parse()).collect::<Result<_>>()?
    };
    if variants.is_empty() {
        return Err(Error::Config(
            "no variants requested; pass --variants vanilla,baseline or --variants all".into(),
        ));
    }
    if args.labels.is_empty() {
        return Err(Error::Config("no label counts requested".into()));
    }
    let flags = flags_from_common(&args.common)?;
    let config = ExperimentConfig::resolve(&flags, &file)?;
    commands::cmd_table(&config, &variants, &args.labels, |variant, labels| {
        let cell_flags = FlagValues {
            variant: Some(variant.clone()),
            labels: Some(labels),
            ..flags.clone()
        };
        ExperimentConfig::resolve(&cell_flags, &file)
    })
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Data { common } => {
            let args = RunArgs { common: common.clone(), ..Default::default() };
            commands::cmd_data(&resolve(&args)?)
        }
        Command::Train(args) => commands::cmd_train(&resolve(args)?),
        Command::Replicate(args) => commands::cmd_replicate(&resolve(args)?),
        Command::Search(args) => commands::cmd_search(&resolve(args)?),
        Command::Table(args) => run_table(args),
    }
}

fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Divergence => 4,
        ErrorClass::Internal => 1,
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(e.class()));
    }
}
