//! Hyperparameter search over noise level, reconstruction weights, and
//! combinator init scale, selected on validation error.
//!
//! Trials derive deterministically from a master seed and share one seed set,
//! so every assignment faces the same weight draws and labeled subsets. The
//! whole search runs behind a test-set seal; selection only ever sees the
//! validation split.

use crate::data::Dataset;
use crate::error::{Error, ErrorClass, Result};
use crate::numerics::{RngStream, Scalar};
use crate::trainer::{evaluate_subset, train, TrainConfig};
use crate::variants::{Hyper, Variant};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// One hyperparameter's search range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParamSpace {
    /// Explicit candidate values.
    Grid { values: Vec<f64> },
    /// Continuous uniform range (random mode only).
    Uniform { lo: f64, hi: f64 },
    /// Log-uniform range over positive values (random mode only).
    LogUniform { lo: f64, hi: f64 },
}

impl ParamSpace {
    /// Single fixed value.
    pub fn fixed(v: f64) -> Self {
        ParamSpace::Grid { values: vec![v] }
    }

    fn validate(&self, name: &str, nonnegative: bool) -> Result<()> {
        match self {
            ParamSpace::Grid { values } => {
                if values.is_empty() {
                    return Err(Error::Config(format!("{name}: empty grid")));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config(format!("{name}: non-finite grid value")));
                }
                if nonnegative && values.iter().any(|&v| v < 0.0) {
                    return Err(Error::Config(format!("{name}: negative value in grid")));
                }
            }
            ParamSpace::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::Config(format!("{name}: bad uniform range [{lo}, {hi}]")));
                }
                if nonnegative && *lo < 0.0 {
                    return Err(Error::Config(format!("{name}: negative range start {lo}")));
                }
            }
            ParamSpace::LogUniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && *lo > 0.0 && lo < hi) {
                    return Err(Error::Config(format!(
                        "{name}: log-uniform range needs 0 < lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }

    fn grid_values(&self, name: &str) -> Result<&[f64]> {
        match self {
            ParamSpace::Grid { values } => Ok(values),
            _ => Err(Error::Config(format!("{name}: grid mode needs explicit values"))),
        }
    }

    fn sample(&self, rng: &mut RngStream) -> f64 {
        match self {
            ParamSpace::Grid { values } => {
                values[rng.uniform_below(values.len() as u64) as usize]
            }
            ParamSpace::Uniform { lo, hi } => lo + (hi - lo) * unit_f64(rng),
            ParamSpace::LogUniform { lo, hi } => {
                (lo.ln() + (hi.ln() - lo.ln()) * unit_f64(rng)).exp()
            }
        }
    }
}

/// Uniform draw in [0, 1) with 53-bit resolution.
fn unit_f64(rng: &mut RngStream) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// How assignments are generated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    /// Full cartesian product of the grids.
    Grid,
    /// `budget` independent draws.
    Random,
}

/// The full search specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub sigma: ParamSpace,
    pub lambda0: ParamSpace,
    pub lambda1: ParamSpace,
    pub lambda_rest: ParamSpace,
    pub eta: ParamSpace,
    pub mode: SearchMode,
    /// Trial count in random mode; caps nothing in grid mode.
    pub budget: usize,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Config("search budget must be at least 1".into()));
        }
        self.sigma.validate("sigma", true)?;
        self.lambda0.validate("lambda0", true)?;
        self.lambda1.validate("lambda1", true)?;
        self.lambda_rest.validate("lambda_rest", true)?;
        self.eta.validate("eta", false)?;
        if self.mode == SearchMode::Grid {
            for (name, p) in self.dims() {
                p.grid_values(name)?;
            }
        }
        Ok(())
    }

    fn dims(&self) -> [(&'static str, &ParamSpace); 5] {
        [
            ("sigma", &self.sigma),
            ("lambda0", &self.lambda0),
            ("lambda1", &self.lambda1),
            ("lambda_rest", &self.lambda_rest),
            ("eta", &self.eta),
        ]
    }

    /// Number of trials this space will run; the cost estimator.
    pub fn trial_count(&self) -> Result<usize> {
        self.validate()?;
        match self.mode {
            SearchMode::Random => Ok(self.budget),
            SearchMode::Grid => {
                let mut count = 1usize;
                for (name, p) in self.dims() {
                    count = count
                        .checked_mul(p.grid_values(name)?.len())
                        .ok_or_else(|| Error::Config("grid size overflows".into()))?;
                }
                Ok(count)
            }
        }
    }

    /// Rough wall-clock estimate given the cost of one training run.
    pub fn estimate_runtime_seconds(
        &self,
        seeds_per_trial: usize,
        seconds_per_run: f64,
    ) -> Result<f64> {
        Ok(self.trial_count()? as f64 * seeds_per_trial as f64 * seconds_per_run)
    }

    /// The deterministic assignment sequence for `master_seed`.
    pub fn assignments(&self, master_seed: u64) -> Result<Vec<Hyper>> {
        self.validate()?;
        match self.mode {
            SearchMode::Grid => {
                let mut out = Vec::with_capacity(self.trial_count()?);
                // Row-major over the dims, last dimension fastest.
                for &s in self.sigma.grid_values("sigma")? {
                    for &l0 in self.lambda0.grid_values("lambda0")? {
                        for &l1 in self.lambda1.grid_values("lambda1")? {
                            for &lr in self.lambda_rest.grid_values("lambda_rest")? {
                                for &eta in self.eta.grid_values("eta")? {
                                    out.push(Hyper {
                                        sigma: s,
                                        lambda0: l0,
                                        lambda1: l1,
                                        lambda_rest: lr,
                                        eta,
                                    });
                                }
                            }
                        }
                    }
                }
                Ok(out)
            }
            SearchMode::Random => {
                let root = RngStream::new(master_seed);
                Ok((0..self.budget)
                    .map(|i| {
                        let draw = |name: &str, p: &ParamSpace| {
                            p.sample(&mut root.substream(&format!("trial{i}/{name}")))
                        };
                        Hyper {
                            sigma: draw("sigma", &self.sigma),
                            lambda0: draw("lambda0", &self.lambda0),
                            lambda1: draw("lambda1", &self.lambda1),
                            lambda_rest: draw("lambda_rest", &self.lambda_rest),
                            eta: draw("eta", &self.eta),
                        }
                    })
                    .collect())
            }
        }
    }
}

/// A practical starting space for a variant: modest grids on the noise and
/// reconstruction weights, plus the init scale for the MLP family.
pub fn default_space(variant: &Variant) -> SearchSpace {
    let mlp = matches!(variant, Variant::Mlp(_) | Variant::Amlp(_));
    let sigma = if variant.uses_noise() {
        ParamSpace::Grid { values: vec![0.1, 0.2, 0.3, 0.5] }
    } else {
        ParamSpace::fixed(0.0)
    };
    let (lambda0, lambda1, lambda_rest) = if variant.uses_reconstruction() {
        (
            ParamSpace::Grid { values: vec![100.0, 500.0, 1000.0, 2000.0] },
            ParamSpace::Grid { values: vec![0.0, 0.1, 1.0, 10.0] },
            ParamSpace::Grid { values: vec![0.0, 0.01, 0.1, 1.0] },
        )
    } else {
        (ParamSpace::fixed(0.0), ParamSpace::fixed(0.0), ParamSpace::fixed(0.0))
    };
    let eta = if mlp {
        ParamSpace::Grid { values: vec![0.01, 0.05, 0.1, 0.2] }
    } else {
        ParamSpace::fixed(0.1)
    };
    SearchSpace { sigma, lambda0, lambda1, lambda_rest, eta, mode: SearchMode::Random, budget: 30 }
}

/// Outcome of one assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    /// Position in the assignment sequence.
    pub index: usize,
    pub hyper: Hyper,
    /// Seeds shared by every trial.
    pub seeds: Vec<u64>,
    /// Validation error (%) per seed; empty if the trial failed early.
    pub val_errors: Vec<f64>,
    /// Mean of `val_errors`; NaN-free only when `failure` is `None`.
    pub mean_val_error: f64,
    /// Divergence diagnostic when the trial failed.
    pub failure: Option<String>,
}

impl TrialResult {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    fn lambda_sum(&self) -> f64 {
        self.hyper.lambda0 + self.hyper.lambda1 + self.hyper.lambda_rest
    }

    fn lex_key(&self) -> [f64; 5] {
        [
            self.hyper.sigma,
            self.hyper.lambda0,
            self.hyper.lambda1,
            self.hyper.lambda_rest,
            self.hyper.eta,
        ]
    }
}

/// All trials plus the ranking over the successful ones.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchOutcome {
    /// Trials in assignment order.
    pub trials: Vec<TrialResult>,
    /// Indices into `trials`, best first; failed trials never appear.
    pub ranked: Vec<usize>,
}

impl SearchOutcome {
    /// The winning trial, if any succeeded.
    pub fn best(&self) -> Option<&TrialResult> {
        self.ranked.first().map(|&i| &self.trials[i])
    }
}

fn rank(trials: &[TrialResult]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..trials.len()).filter(|&i| !trials[i].failed()).collect();
    idx.sort_by(|&a, &b| {
        let (ta, tb) = (&trials[a], &trials[b]);
        ta.mean_val_error
            .total_cmp(&tb.mean_val_error)
            .then(ta.lambda_sum().total_cmp(&tb.lambda_sum()))
            .then_with(|| {
                let (ka, kb) = (ta.lex_key(), tb.lex_key());
                for (x, y) in ka.iter().zip(&kb) {
                    match x.total_cmp(y) {
                        std::cmp::Ordering::Equal => continue,
                        other => return other,
                    }
                }
                std::cmp::Ordering::Equal
            })
    });
    idx
}

/// Run the search: every assignment trains `seeds_per_trial` runs and is
/// scored by mean validation error.
///
/// The same derived seed set serves every trial, so assignments compete on
/// equal footing. A diverging run marks its trial failed and excluded from
/// ranking; any other error aborts the search. Results stream to `out` as
/// JSON lines in assignment order. The search itself never touches the test
/// set: training seals it, and selection reads only the validation split.
pub fn run_search<S: Scalar>(
    space: &SearchSpace,
    variant: &Variant,
    base: &TrainConfig,
    data: &Dataset<S>,
    seeds_per_trial: usize,
    master_seed: u64,
    workers: usize,
    mut out: Option<&mut dyn Write>,
) -> Result<SearchOutcome> {
    if seeds_per_trial == 0 {
        return Err(Error::Config("need at least one seed per trial".into()));
    }
    let assignments = space.assignments(master_seed)?;
    let mut seed_rng = RngStream::new(master_seed).substream("trial-seeds");
    let seeds: Vec<u64> = (0..seeds_per_trial).map(|_| seed_rng.next_u64()).collect();

    let run_trial = |(index, hyper): (usize, &Hyper)| -> Result<TrialResult> {
        let spec = variant.spec(&base.spec.layer_sizes, base.spec.activation, hyper)?;
        let mut val_errors = Vec::with_capacity(seeds.len());
        for &seed in &seeds {
            let mut cfg = base.clone();
            cfg.spec = spec.clone();
            cfg.seed = seed;
            match train(&cfg, data, None) {
                Ok(outcome) => {
                    let err = evaluate_subset(
                        &outcome.model,
                        data,
                        &outcome.split.validation,
                        1000,
                    )?;
                    val_errors.push(err);
                }
                Err(e) if e.class() == ErrorClass::Divergence => {
                    return Ok(TrialResult {
                        index,
                        hyper: hyper.clone(),
                        seeds: seeds.clone(),
                        val_errors,
                        mean_val_error: f64::NAN,
                        failure: Some(format!("seed {seed}: {e}")),
                    });
                }
                Err(e) => return Err(e),
            }
        }
        let mean = val_errors.iter().sum::<f64>() / val_errors.len() as f64;
        Ok(TrialResult {
            index,
            hyper: hyper.clone(),
            seeds: seeds.clone(),
            val_errors,
            mean_val_error: mean,
            failure: None,
        })
    };

    let indexed: Vec<(usize, &Hyper)> = assignments.iter().enumerate().collect();
    let trials: Vec<TrialResult> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
        pool.install(|| indexed.into_par_iter().map(run_trial).collect::<Result<Vec<_>>>())?
    } else {
        indexed.into_iter().map(run_trial).collect::<Result<Vec<_>>>()?
    };

    if let Some(w) = out.as_deref_mut() {
        for t in &trials {
            serde_json::to_writer(&mut *w, t)?;
            writeln!(w)?;
        }
    }

    let ranked = rank(&trials);
    Ok(SearchOutcome { trials, ranked })
}
