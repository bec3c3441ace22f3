//! Experiment configuration: presets, flags, and the optional config file.
//!
//! Resolution order is preset defaults, then command-line flags, then the
//! config file — the file has the last word, so a checked-in experiment
//! definition cannot be drifted by stray flags.

use ladder::error::{Error, Result};
use ladder::model::Activation;
use ladder::search::{SearchSpace, default_space};
use ladder::trainer::TrainConfig;
use ladder::variants::{Hyper, Variant};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Scale preset: quick desk runs or the full protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 784-256-128-10, 30 + 15 epochs, 3 seeds.
    Desk,
    /// 784-1000-500-250-250-250-10, 100 + 50 epochs, 10 seeds.
    Paper,
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::Config(format!("unknown preset `{other}`; use desk or paper"))),
        }
    }
}

/// Numeric precision of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(Error::Config(format!("unknown precision `{other}`; use f32 or f64"))),
        }
    }
}

/// Search settings beyond the space itself.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SearchSettings {
    #[serde(default)]
    pub space: Option<SearchSpace>,
    pub seeds_per_trial: usize,
    pub master_seed: u64,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self { space: None, seeds_per_trial: 2, master_seed: 0 }
    }
}

/// The fully resolved experiment definition embedded in every report.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub variant: Variant,
    /// Labeled example count; 60000 switches to fully supervised batching.
    pub labels: usize,
    pub seeds: Vec<u64>,
    pub preset: Preset,
    pub precision: Precision,
    pub workers: usize,
    pub data_dir: PathBuf,
    pub out: PathBuf,
    pub arch: Vec<usize>,
    pub epochs_flat: usize,
    pub epochs_decay: usize,
    pub base_lr: f64,
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    pub validation_size: usize,
    pub labeled_in_unlabeled: bool,
    pub hyper: Hyper,
    #[serde(default)]
    pub search: SearchSettings,
}

/// The optional JSON config file: every field optional, overriding flags.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub variant: Option<Variant>,
    pub labels: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub preset: Option<Preset>,
    pub precision: Option<Precision>,
    pub workers: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub arch: Option<Vec<usize>>,
    pub epochs_flat: Option<usize>,
    pub epochs_decay: Option<usize>,
    pub base_lr: Option<f64>,
    pub batch_labeled: Option<usize>,
    pub batch_unlabeled: Option<usize>,
    pub validation_size: Option<usize>,
    pub labeled_in_unlabeled: Option<bool>,
    pub hyper: Option<Hyper>,
    pub search: Option<SearchSettings>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad config file {}: {e}", path.display())))
    }
}

/// Flag values as they arrived from the command line.
#[derive(Clone, Debug, Default)]
pub struct FlagValues {
    pub variant: Option<Variant>,
    pub labels: Option<usize>,
    pub seeds: Option<usize>,
    pub preset: Option<Preset>,
    pub precision: Option<Precision>,
    pub workers: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

const VALID_LABELS: [usize; 3] = [100, 1000, 60_000];

impl ExperimentConfig {
    /// Merge preset defaults, flags, and the config file (strongest last).
    pub fn resolve(flags: &FlagValues, file: &ConfigFile) -> Result<Self> {
        let preset = file.preset.or(flags.preset).unwrap_or(Preset::Desk);
        let (arch, epochs_flat, epochs_decay, default_seeds): (Vec<usize>, usize, usize, usize) =
            match preset {
                Preset::Desk => (vec![784, 256, 128, 10], 30, 15, 3),
                Preset::Paper => (vec![784, 1000, 500, 250, 250, 250, 10], 100, 50, 10),
            };
        let labels = file.labels.or(flags.labels).unwrap_or(100);
        if !VALID_LABELS.contains(&labels) {
            return Err(Error::Config(format!(
                "labels must be one of {VALID_LABELS:?}, got {labels}"
            )));
        }
        let seeds = match (&file.seeds, flags.seeds) {
            (Some(list), _) => list.clone(),
            (None, Some(count)) => (0..count as u64).collect(),
            (None, None) => (0..default_seeds as u64).collect(),
        };
        if seeds.is_empty() {
            return Err(Error::Config("need at least one seed".into()));
        }
        let variant = file
            .variant
            .clone()
            .or_else(|| flags.variant.clone())
            .unwrap_or(Variant::Vanilla);
        let fully_supervised = labels == 60_000;
        let config = Self {
            variant,
            labels,
            seeds,
            preset,
            precision: file.precision.or(flags.precision).unwrap_or(Precision::F64),
            workers: file.workers.or(flags.workers).unwrap_or(1),
            data_dir: file
                .data_dir
                .clone()
                .or_else(|| flags.data_dir.clone())
                .unwrap_or_else(|| PathBuf::from("data/mnist")),
            out: file
                .out
                .clone()
                .or_else(|| flags.out.clone())
                .unwrap_or_else(|| PathBuf::from("runs")),
            arch: file.arch.clone().unwrap_or(arch),
            epochs_flat: file.epochs_flat.unwrap_or(epochs_flat),
            epochs_decay: file.epochs_decay.unwrap_or(epochs_decay),
            base_lr: file.base_lr.unwrap_or(0.002),
            batch_labeled: file.batch_labeled.unwrap_or(100),
            batch_unlabeled: file
                .batch_unlabeled
                .unwrap_or(if fully_supervised { 0 } else { 100 }),
            // Fully supervised runs train on all 60000; searches hold
            // validation out separately (see `search_train_config`).
            validation_size: file
                .validation_size
                .unwrap_or(if fully_supervised { 0 } else { 10_000 }),
            labeled_in_unlabeled: file.labeled_in_unlabeled.unwrap_or(true),
            hyper: file.hyper.clone().unwrap_or_else(|| Hyper::default_for(labels)),
            search: file.search.clone().unwrap_or_default(),
        };
        if config.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        // Assemble once so structural errors surface at resolution time.
        config.train_config(*config.seeds.first().expect("nonempty"))?;
        Ok(config)
    }

    /// The trainer-level config for one seed.
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let spec = self.variant.spec(&self.arch, Activation::Relu, &self.hyper)?;
        let cfg = TrainConfig {
            spec,
            base_lr: self.base_lr,
            epochs_flat: self.epochs_flat,
            epochs_decay: self.epochs_decay,
            batch_labeled: self.batch_labeled,
            batch_unlabeled: self.batch_unlabeled,
            n_labeled: self.labels,
            validation_size: self.validation_size,
            labeled_in_unlabeled: self.labeled_in_unlabeled,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The search space: explicit from the file, or the variant's default.
    pub fn search_space(&self) -> SearchSpace {
        self.search.space.clone().unwrap_or_else(|| default_space(&self.variant))
    }

    /// The trainer config searches rank trials with. Fully supervised runs
    /// normally train on all 60000 examples, but a search needs a held-out
    /// validation split, so trials there train on the remaining 50000.
    pub fn search_train_config(&self, seed: u64) -> Result<TrainConfig> {
        let mut cfg = self.train_config(seed)?;
        if self.labels == 60_000 && cfg.validation_size == 0 {
            cfg.validation_size = 10_000;
            cfg.n_labeled = 60_000 - cfg.validation_size;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_desk_preset() {
        let cfg = ExperimentConfig::resolve(&FlagValues::default(), &ConfigFile::default()).unwrap();
        assert_eq!(cfg.preset, Preset::Desk);
        assert_eq!(cfg.arch, vec![784, 256, 128, 10]);
        assert_eq!((cfg.epochs_flat, cfg.epochs_decay), (30, 15));
        assert_eq!(cfg.seeds, vec![0, 1, 2]);
        assert_eq!(cfg.labels, 100);
        assert_eq!(cfg.precision, Precision::F64);
        assert_eq!(cfg.batch_unlabeled, 100);
        assert_eq!(cfg.hyper, Hyper::default_semi());
    }

    #[test]
    fn paper_preset_sets_the_full_protocol() {
        let flags = FlagValues { preset: Some(Preset::Paper), ..Default::default() };
        let cfg = ExperimentConfig::resolve(&flags, &ConfigFile::default()).unwrap();
        assert_eq!(cfg.arch, vec![784, 1000, 500, 250, 250, 250, 10]);
        assert_eq!((cfg.epochs_flat, cfg.epochs_decay), (100, 50));
        assert_eq!(cfg.seeds.len(), 10);
    }

    #[test]
    fn config_file_overrides_flags() {
        let flags = FlagValues {
            labels: Some(100),
            seeds: Some(5),
            preset: Some(Preset::Desk),
            ..Default::default()
        };
        let file = ConfigFile {
            labels: Some(1000),
            seeds: Some(vec![7, 8]),
            ..Default::default()
        };
        let cfg = ExperimentConfig::resolve(&flags, &file).unwrap();
        assert_eq!(cfg.labels, 1000, "file beats flag");
        assert_eq!(cfg.seeds, vec![7, 8]);
    }

    #[test]
    fn full_supervision_switches_to_labeled_batching() {
        let flags = FlagValues { labels: Some(60_000), ..Default::default() };
        let cfg = ExperimentConfig::resolve(&flags, &ConfigFile::default()).unwrap();
        assert_eq!(cfg.batch_unlabeled, 0);
        assert_eq!(cfg.hyper, Hyper::default_full());
        // The final run trains on everything; a search still holds out
        // validation and trains trials on the rest.
        assert_eq!(cfg.validation_size, 0);
        let tc = cfg.train_config(0).unwrap();
        assert_eq!((tc.n_labeled, tc.validation_size), (60_000, 0));
        let sc = cfg.search_train_config(0).unwrap();
        assert_eq!((sc.n_labeled, sc.validation_size), (50_000, 10_000));
    }

    #[test]
    fn label_counts_outside_the_protocol_are_rejected() {
        let flags = FlagValues { labels: Some(500), ..Default::default() };
        let err = ExperimentConfig::resolve(&flags, &ConfigFile::default()).unwrap_err();
        assert!(err.to_string().contains("labels"), "got: {err}");
    }

    #[test]
    fn unknown_config_file_fields_are_rejected() {
        let dir = std::env::temp_dir().join(format!("ladder-cli-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.json");
        std::fs::write(&path, r#"{"labls": 100}"#).unwrap();
        let err = ConfigFile::load(&path).unwrap_err();
        assert!(err.to_string().contains("labls"), "got: {err}");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn train_config_assembly_round_trips_the_variant() {
        let flags = FlagValues { variant: Some("gatedgauss".parse().unwrap()), ..Default::default() };
        let cfg = ExperimentConfig::resolve(&flags, &ConfigFile::default()).unwrap();
        let tc = cfg.train_config(3).unwrap();
        assert_eq!(tc.seed, 3);
        assert_eq!(tc.spec.layer_sizes, vec![784, 256, 128, 10]);
        assert_eq!(tc.n_labeled, 100);
        assert_eq!(
            tc.spec.combinator,
            ladder::combinators::CombinatorKind::GatedGauss
        );
    }
}
