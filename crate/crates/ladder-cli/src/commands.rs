//! The five subcommands: data, train, replicate, search, table.
//!
//! Every report embeds the resolved [`ExperimentConfig`] and a SHA-256 of
//! the running binary, so a result file identifies both the experiment and
//! the code version that produced it.

use crate::config::{ExperimentConfig, Precision};
use ladder::data::{load_mnist_test, load_mnist_train, prepare_cache, Dataset, TestSet};
use ladder::error::Result;
use ladder::model::save_checkpoint;
use ladder::numerics::Scalar;
use ladder::search::{run_search, SearchOutcome};
use ladder::trainer::{replicate, train, RunReport};
use ladder::variants::Variant;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

/// SHA-256 of the binary itself, identifying the code version in reports.
pub fn code_sha256() -> &'static str {
    static HASH: OnceLock<String> = OnceLock::new();
    HASH.get_or_init(|| {
        std::env::current_exe()
            .and_then(std::fs::read)
            .map(|bytes| format!("{:x}", Sha256::digest(&bytes)))
            .unwrap_or_else(|_| "unavailable".to_string())
    })
}

/// Wrapper around every JSON artifact: payload plus provenance.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'static str,
    code_sha256: &'a str,
    config: &'a ExperimentConfig,
    report: T,
}

fn write_json<T: Serialize>(path: &Path, config: &ExperimentConfig, report: T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let envelope = Envelope {
        version: env!("CARGO_PKG_VERSION"),
        code_sha256: code_sha256(),
        config,
        report,
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, &envelope)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Filesystem-safe name for a run directory: `desk-vanilla-100`.
fn run_slug(config: &ExperimentConfig) -> String {
    let variant: String = config
        .variant
        .to_string()
        .chars()
        .map(|c| match c {
            '&' => 'n',
            '+' | ',' | '[' => '-',
            ']' => '_',
            c => c,
        })
        .collect();
    let preset = format!("{:?}", config.preset).to_lowercase();
    format!("{preset}-{}-{}", variant.trim_end_matches('_'), config.labels)
}

fn run_dir(config: &ExperimentConfig) -> PathBuf {
    config.out.join(run_slug(config))
}

fn load_train<S: Scalar>(config: &ExperimentConfig) -> Result<Dataset<S>> {
    load_mnist_train(&config.data_dir)
}

fn load_test<S: Scalar>(config: &ExperimentConfig) -> Result<TestSet<S>> {
    load_mnist_test(&config.data_dir)
}

/// `ladder data`: verify the four MNIST files and build the prepared cache.
pub fn cmd_data(config: &ExperimentConfig) -> Result<()> {
    let prepared = prepare_cache(&config.data_dir)?;
    for (name, count) in &prepared {
        println!("{name}: {count} examples, digest ok");
    }
    println!(
        "cache ready under {}",
        config.data_dir.join("prepared").display()
    );
    Ok(())
}

/// `ladder train`: one seed, checkpoint plus step log plus summary JSON.
pub fn cmd_train(config: &ExperimentConfig) -> Result<()> {
    match config.precision {
        Precision::F32 => train_one::<f32>(config),
        Precision::F64 => train_one::<f64>(config),
    }
}

#[derive(Serialize)]
struct TrainSummary {
    seed: u64,
    epochs: usize,
    steps: u64,
    test_error_pct: f64,
    wall_seconds: f64,
    checkpoint: PathBuf,
    step_log: PathBuf,
}

fn train_one<S: Scalar>(config: &ExperimentConfig) -> Result<()> {
    let seed = config.seeds[0];
    let cfg = config.train_config(seed)?;
    let data = load_train::<S>(config)?;
    let test = load_test::<S>(config)?;
    let dir = run_dir(config);
    std::fs::create_dir_all(&dir)?;

    let log_path = dir.join(format!("seed{seed}.steps.csv"));
    let mut log = BufWriter::new(File::create(&log_path)?);
    let outcome = train(&cfg, &data, Some(&mut log))?;
    log.flush()?;
    drop(log);

    let test_error = ladder::trainer::evaluate_on_test(&outcome.model, &test, 1000)?;
    let ckpt_path = dir.join(format!("seed{seed}.checkpoint.json.gz"));
    save_checkpoint(&outcome.model, &ckpt_path)?;

    let summary = TrainSummary {
        seed,
        epochs: outcome.epochs.len(),
        steps: outcome.steps,
        test_error_pct: test_error,
        wall_seconds: outcome.wall_seconds,
        checkpoint: ckpt_path.clone(),
        step_log: log_path,
    };
    write_json(&dir.join(format!("seed{seed}.summary.json")), config, &summary)?;
    println!(
        "{} seed {seed}: test error {test_error:.3}% after {} steps ({:.1}s)",
        config.variant, outcome.steps, outcome.wall_seconds
    );
    println!("checkpoint: {}", ckpt_path.display());
    Ok(())
}

/// `ladder replicate`: every seed, aggregated into a report JSON.
pub fn cmd_replicate(config: &ExperimentConfig) -> Result<()> {
    let report = match config.precision {
        Precision::F32 => replicate_all::<f32>(config)?,
        Precision::F64 => replicate_all::<f64>(config)?,
    };
    println!(
        "{} labels={}: AER {:.3}% +/- {:.3}% over {} seeds ({:.1}s)",
        config.variant,
        config.labels,
        report.aer,
        report.se,
        report.seeds.len(),
        report.wall_seconds
    );
    Ok(())
}

fn replicate_all<S: Scalar>(config: &ExperimentConfig) -> Result<RunReport> {
    let cfg = config.train_config(config.seeds[0])?;
    let data = load_train::<S>(config)?;
    let test = load_test::<S>(config)?;
    let dir = run_dir(config);
    let report = replicate(&cfg, &config.seeds, &data, &test, config.workers, Some(&dir))?;
    write_json(&dir.join("report.json"), config, &report)?;
    Ok(report)
}

/// `ladder search`: the variant's space, trials streamed to JSONL.
pub fn cmd_search(config: &ExperimentConfig) -> Result<()> {
    let outcome = match config.precision {
        Precision::F32 => search_all::<f32>(config)?,
        Precision::F64 => search_all::<f64>(config)?,
    };
    let succeeded = outcome.trials.iter().filter(|t| !t.failed()).count();
    println!(
        "{} trials ({} succeeded, {} diverged)",
        outcome.trials.len(),
        succeeded,
        outcome.trials.len() - succeeded
    );
    match outcome.best() {
        Some(best) => println!(
            "best: sigma={} lambda0={} lambda1={} lambda_rest={} eta={} -> {:.3}% validation error",
            best.hyper.sigma,
            best.hyper.lambda0,
            best.hyper.lambda1,
            best.hyper.lambda_rest,
            best.hyper.eta,
            best.mean_val_error
        ),
        None => println!("no trial survived"),
    }
    Ok(())
}

fn search_all<S: Scalar>(config: &ExperimentConfig) -> Result<SearchOutcome> {
    let space = config.search_space();
    let base = config.search_train_config(config.seeds[0])?;
    let data = load_train::<S>(config)?;
    let dir = run_dir(config);
    std::fs::create_dir_all(&dir)?;
    let mut jsonl = BufWriter::new(File::create(dir.join("trials.jsonl"))?);
    let outcome = run_search(
        &space,
        &config.variant,
        &base,
        &data,
        config.search.seeds_per_trial,
        config.search.master_seed,
        config.workers,
        Some(&mut jsonl),
    )?;
    jsonl.flush()?;
    drop(jsonl);
    write_json(&dir.join("search.json"), config, &outcome)?;
    Ok(outcome)
}

/// One cell of the results table.
#[derive(Serialize)]
struct TableCell {
    variant: String,
    labels: usize,
    seeds: usize,
    aer_pct: f64,
    se_pct: f64,
    fingerprint: String,
}

/// `ladder table`: replicate each variant at each label count, emit CSV.
pub fn cmd_table(
    config: &ExperimentConfig,
    variants: &[Variant],
    label_counts: &[usize],
    resolve_cell: impl Fn(&Variant, usize) -> Result<ExperimentConfig>,
) -> Result<()> {
    let mut cells = Vec::new();
    for variant in variants {
        for &labels in label_counts {
            let cell_cfg = resolve_cell(variant, labels)?;
            eprintln!("[table] {variant} labels={labels} ...");
            let report = match cell_cfg.precision {
                Precision::F32 => replicate_all::<f32>(&cell_cfg)?,
                Precision::F64 => replicate_all::<f64>(&cell_cfg)?,
            };
            eprintln!(
                "[table] {variant} labels={labels}: AER {:.3}% +/- {:.3}% ({:.1}s)",
                report.aer, report.se, report.wall_seconds
            );
            cells.push(TableCell {
                variant: variant.to_string(),
                labels,
                seeds: report.seeds.len(),
                aer_pct: report.aer,
                se_pct: report.se,
                fingerprint: report.fingerprint.clone(),
            });
        }
    }

    std::fs::create_dir_all(&config.out)?;
    let csv_path = config.out.join("table.csv");
    let mut csv = BufWriter::new(File::create(&csv_path)?);
    writeln!(csv, "variant,labels,seeds,aer_pct,se_pct")?;
    for c in &cells {
        writeln!(csv, "{},{},{},{},{}", c.variant, c.labels, c.seeds, c.aer_pct, c.se_pct)?;
    }
    csv.flush()?;
    write_json(&config.out.join("table.json"), config, &cells)?;

    println!("variant,labels,seeds,aer_pct,se_pct");
    for c in &cells {
        println!("{},{},{},{:.3},{:.3}", c.variant, c.labels, c.seeds, c.aer_pct, c.se_pct);
    }
    println!("written to {}", csv_path.display());
    Ok(())
}
