//! Classification-error metrics and the seeded Monte Carlo benchmark runner.

use crate::em::{run_em, CovarianceForm, EmError, FitConfig, MosRule};
use crate::init::{InitKind, InitRecipe};
use crate::rng::derive_seed;
use crate::scenario::{generate, ScenarioConfig, ScenarioError};
use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Em(#[from] EmError),
}

/// How estimated class indices are matched against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matching {
    /// Compare indices directly, relying on the initialization's
    /// ascending-power index convention.
    #[default]
    PowerOrder,
    /// Minimum mismatch count over all relabelings of the estimate
    /// (enforced for `L <= 8`).
    BestPermutation,
}

/// Number of bins whose class is not correctly identified.
pub fn classification_error(
    estimated: &[usize],
    truth: &[usize],
    matching: Matching,
) -> Result<usize, EvalError> {
    if estimated.len() != truth.len() {
        return Err(EvalError::InvalidInput(format!(
            "label lengths differ: {} vs {}",
            estimated.len(),
            truth.len()
        )));
    }
    if estimated.is_empty() {
        return Err(EvalError::InvalidInput("empty label vectors".into()));
    }
    let l = estimated.iter().chain(truth).copied().max().unwrap();
    if estimated.iter().chain(truth).any(|&c| c == 0) {
        return Err(EvalError::InvalidInput("labels must be in 1..=L".into()));
    }
    match matching {
        Matching::PowerOrder => {
            Ok(estimated.iter().zip(truth).filter(|(e, t)| e != t).count())
        }
        Matching::BestPermutation => {
            if l > 8 {
                return Err(EvalError::InvalidInput(format!(
                    "best-permutation matching is limited to L <= 8, got L = {l}"
                )));
            }
            let best = (1..=l)
                .permutations(l)
                .map(|perm| {
                    estimated
                        .iter()
                        .zip(truth)
                        .filter(|(&e, &t)| perm[e - 1] != t)
                        .count()
                })
                .min()
                .unwrap();
            Ok(best)
        }
    }
}

/// Root mean square of the per-trial error counts.
pub fn rmsce(error_counts: &[usize]) -> Result<f64, EvalError> {
    if error_counts.is_empty() {
        return Err(EvalError::InvalidInput("rmsce of an empty list".into()));
    }
    let mean_sq = error_counts.iter().map(|&e| (e * e) as f64).sum::<f64>()
        / error_counts.len() as f64;
    Ok(mean_sq.sqrt())
}

/// One Monte Carlo trial's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub error_count: usize,
    /// Final log-likelihood; absent when the trial failed.
    pub final_ll: Option<f64>,
    pub iterations: usize,
    pub collapsed: bool,
    pub seed: u64,
    pub runtime_ms: f64,
}

/// Aggregated benchmark over independent seeded trials.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub scenario: ScenarioConfig,
    pub method: String,
    pub trials: usize,
    pub rmsce: f64,
    /// error count -> number of trials with that count.
    pub error_histogram: BTreeMap<usize, usize>,
    pub mean_runtime_ms: f64,
    /// Trials that failed (class collapse or numerical breakdown) and were
    /// scored at the maximum error count.
    pub failed_trials: usize,
}

/// Short human-readable tag for a fit configuration.
pub fn method_label(fit: &FitConfig) -> String {
    match fit.form {
        CovarianceForm::General => "general".into(),
        CovarianceForm::ScaledCommon => "scaled_common".into(),
        CovarianceForm::LowRankNoise => {
            if fit.ranks.is_some() {
                "low_rank_noise(r known)".into()
            } else {
                match fit.mos_rule {
                    MosRule::Aic => "low_rank_noise(aic)".into(),
                    MosRule::Gic { a } => format!("low_rank_noise(gic a={a})"),
                    MosRule::Bic => "low_rank_noise(bic)".into(),
                }
            }
        }
    }
}

/// Run `trials` independent seeded trials of generate → init → fit → score.
///
/// Trial `i` derives every random stream from `(master_seed, "trial", i)`, so
/// the report is a pure function of its arguments regardless of how many
/// threads execute the trials. Failed trials are scored at the maximum error
/// count `K` rather than dropped.
pub fn monte_carlo(
    scenario: &ScenarioConfig,
    fit_config: &FitConfig,
    trials: usize,
    master_seed: u64,
    matching: Matching,
) -> Result<BenchmarkReport, EvalError> {
    if trials == 0 {
        return Err(EvalError::InvalidInput("need at least one trial".into()));
    }
    scenario.validate()?;
    fit_config.validate()?;
    if fit_config.classes != scenario.classes() {
        return Err(EvalError::InvalidInput(format!(
            "fit expects {} classes but the scenario has {}",
            fit_config.classes,
            scenario.classes()
        )));
    }
    let k = scenario.total_bins();

    let outcomes: Vec<TrialOutcome> = (0..trials as u64)
        .into_par_iter()
        .map(|i| run_trial(scenario, fit_config, master_seed, i, matching, k))
        .collect::<Result<_, EvalError>>()?;

    let error_counts: Vec<usize> = outcomes.iter().map(|o| o.error_count).collect();
    let mut error_histogram = BTreeMap::new();
    for &e in &error_counts {
        *error_histogram.entry(e).or_insert(0usize) += 1;
    }
    let failed_trials = outcomes.iter().filter(|o| o.collapsed).count();
    let mean_runtime_ms = outcomes.iter().map(|o| o.runtime_ms).sum::<f64>() / trials as f64;

    Ok(BenchmarkReport {
        scenario: scenario.clone(),
        method: method_label(fit_config),
        trials,
        rmsce: rmsce(&error_counts)?,
        error_histogram,
        mean_runtime_ms,
        failed_trials,
    })
}

fn run_trial(
    scenario: &ScenarioConfig,
    fit_config: &FitConfig,
    master_seed: u64,
    index: u64,
    matching: Matching,
    k: usize,
) -> Result<TrialOutcome, EvalError> {
    let start = Instant::now();
    let trial_seed = derive_seed(master_seed, "trial", index);
    let mut cfg = scenario.clone();
    cfg.seed = trial_seed;
    let labeled = generate(&cfg)?;

    let recipe = InitRecipe { kind: InitKind::PaperDefault, seed: trial_seed };
    let fit = recipe
        .resolve(&labeled.snapshots, fit_config)
        .and_then(|init| run_em(&labeled.snapshots, fit_config, &init));

    let outcome = match fit {
        Ok(result) => {
            let error_count =
                classification_error(&result.labels, &labeled.true_labels, matching)?;
            TrialOutcome {
                error_count,
                final_ll: result.ll_trace.last().copied(),
                iterations: result.iterations_run,
                collapsed: false,
                seed: trial_seed,
                runtime_ms: start.elapsed().as_secs_f64() * 1e3,
            }
        }
        Err(err) => {
            log::warn!("trial {index} failed and is scored at maximum error: {err}");
            TrialOutcome {
                error_count: k,
                final_ll: None,
                iterations: 0,
                collapsed: true,
                seed: trial_seed,
                runtime_ms: start.elapsed().as_secs_f64() * 1e3,
            }
        }
    };
    Ok(outcome)
}
