//! Command implementations behind the `clutterclass` binary.

use crate::em::run_em;
use crate::eval::{monte_carlo, EvalError};
use crate::init::{InitKind, InitRecipe};
use crate::io::{
    self, FitResultDoc, IoError, RmsceGrid,
};
use crate::scenario::generate;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid run manifest: {0}")]
    Manifest(String),
}

impl CliError {
    /// Stable machine-readable error category.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io(IoError::Scenario(_)) => "scenario",
            CliError::Io(IoError::Em(_)) => "em",
            CliError::Io(_) => "io",
            CliError::Eval(EvalError::Scenario(_)) => "scenario",
            CliError::Eval(EvalError::Em(_)) => "em",
            CliError::Eval(_) => "eval",
            CliError::Manifest(_) => "manifest",
        }
    }
}

/// One CLI invocation, validated before any computation runs.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: Command,
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
    pub seed_override: Option<u64>,
    pub verbosity: u8,
}

#[derive(Debug, Clone)]
pub enum Command {
    Simulate,
    Fit { data: PathBuf, truth: Option<PathBuf> },
    Benchmark { trials: usize, master_seed: u64 },
    Tables,
}

/// Dispatch a manifest. Returns the process exit code: 0 on full success,
/// 2 when a benchmark completed but some trials were flagged as failed.
pub fn run(manifest: &RunManifest) -> Result<i32, CliError> {
    if !manifest.config_path.is_file() {
        return Err(CliError::Manifest(format!(
            "config file {} does not exist",
            manifest.config_path.display()
        )));
    }
    match &manifest.command {
        Command::Simulate => {
            cmd_simulate(&manifest.config_path, &manifest.output_dir, manifest.seed_override)?;
            Ok(0)
        }
        Command::Fit { data, truth } => {
            cmd_fit(
                &manifest.config_path,
                data,
                truth.as_deref(),
                &manifest.output_dir,
                manifest.seed_override,
            )?;
            Ok(0)
        }
        Command::Benchmark { trials, master_seed } => cmd_benchmark(
            &manifest.config_path,
            *trials,
            manifest.seed_override.unwrap_or(*master_seed),
            &manifest.output_dir,
        ),
        Command::Tables => cmd_tables(&manifest.config_path, &manifest.output_dir, manifest.seed_override),
    }
}

fn ensure_out_dir(out_dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| {
        CliError::Manifest(format!("cannot create output directory {}: {e}", out_dir.display()))
    })
}

/// Generate a synthetic scenario and write the range-profile file plus the
/// true labels.
pub fn cmd_simulate(
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<(), CliError> {
    ensure_out_dir(out_dir)?;
    let mut scenario = io::parse_scenario_config(config_path)?;
    if let Some(seed) = seed_override {
        scenario.seed = seed;
    }
    let labeled = generate(&scenario).map_err(IoError::from)?;
    io::write_range_profile(&out_dir.join("range_profile.csv"), &labeled.snapshots)?;
    io::write_labels_csv(&out_dir.join("truth_labels.csv"), &labeled.true_labels)?;
    log::info!(
        "simulated {} bins x {} channels into {}",
        labeled.snapshots.bins(),
        labeled.snapshots.channels(),
        out_dir.display()
    );
    Ok(())
}

/// Fit a mixture to a range-profile file and write the result JSON plus a
/// plot-ready label CSV.
pub fn cmd_fit(
    config_path: &Path,
    data_path: &Path,
    truth_path: Option<&Path>,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<(), CliError> {
    ensure_out_dir(out_dir)?;
    let mut doc = io::parse_fit_config(config_path)?;
    if let Some(seed) = seed_override {
        doc.seed = seed;
    }
    let z = io::load_range_profile(data_path)?;
    let truth = truth_path.map(io::load_labels_csv).transpose()?;
    if let Some(t) = &truth {
        if t.len() != z.bins() {
            return Err(CliError::Manifest(format!(
                "truth has {} labels but the data has {} bins",
                t.len(),
                z.bins()
            )));
        }
    }
    let fit_config = doc.to_fit_config();
    let recipe = InitRecipe { kind: InitKind::PaperDefault, seed: doc.seed };
    let init = recipe.resolve(&z, &fit_config).map_err(IoError::from)?;
    let fit = run_em(&z, &fit_config, &init).map_err(IoError::from)?;
    io::write_fit_result(&out_dir.join("fit_result.json"), &FitResultDoc::from(&fit))?;
    io::write_label_comparison_csv(&out_dir.join("labels.csv"), &fit.labels, truth.as_deref())?;
    log::info!(
        "fit {} bins in {} iterations, final log-likelihood {:.3}",
        z.bins(),
        fit.iterations_run,
        fit.ll_trace.last().unwrap()
    );
    Ok(())
}

/// Run a seeded Monte Carlo benchmark and write the report plus the error
/// histogram. Exit code 2 signals flagged (failed) trials in the report.
pub fn cmd_benchmark(
    config_path: &Path,
    trials: usize,
    master_seed: u64,
    out_dir: &Path,
) -> Result<i32, CliError> {
    ensure_out_dir(out_dir)?;
    let doc = io::parse_benchmark_config(config_path)?;
    let fit_config = doc.fit.to_fit_config();
    let report = monte_carlo(&doc.scenario, &fit_config, trials, master_seed, doc.matching)?;
    io::write_benchmark_report(&out_dir.join("report.json"), &report)?;
    io::write_histogram_csv(&out_dir.join("histogram.csv"), &report)?;
    log::info!(
        "benchmark `{}`: rmsce {:.4} over {} trials ({} failed)",
        report.method,
        report.rmsce,
        report.trials,
        report.failed_trials
    );
    Ok(if report.failed_trials == 0 { 0 } else { 2 })
}

/// Benchmark a scenario×method grid and write the RMSCE table as JSON and
/// CSV.
pub fn cmd_tables(
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<i32, CliError> {
    ensure_out_dir(out_dir)?;
    let doc = io::parse_tables_config(config_path)?;
    let seed = seed_override.unwrap_or(doc.seed);
    let mut rmsce = Vec::with_capacity(doc.scenarios.len());
    let mut failed = Vec::with_capacity(doc.scenarios.len());
    for named_scenario in &doc.scenarios {
        let mut row = Vec::with_capacity(doc.methods.len());
        let mut failed_row = Vec::with_capacity(doc.methods.len());
        for named_method in &doc.methods {
            let fit_config = named_method.fit.to_fit_config();
            let report = monte_carlo(
                &named_scenario.scenario,
                &fit_config,
                doc.trials,
                seed,
                doc.matching,
            )?;
            log::info!(
                "grid cell ({}, {}): rmsce {:.4}",
                named_scenario.name,
                named_method.name,
                report.rmsce
            );
            row.push(report.rmsce);
            failed_row.push(report.failed_trials);
        }
        rmsce.push(row);
        failed.push(failed_row);
    }
    let any_failed = failed.iter().flatten().any(|&f| f > 0);
    let grid = RmsceGrid {
        scenarios: doc.scenarios.iter().map(|s| s.name.clone()).collect(),
        methods: doc.methods.iter().map(|m| m.name.clone()).collect(),
        trials: doc.trials,
        seed,
        rmsce,
        failed_trials: failed,
    };
    io::write_grid_json(&out_dir.join("grid.json"), &grid)?;
    io::write_grid_csv(&out_dir.join("grid.csv"), &grid)?;
    Ok(if any_failed { 2 } else { 0 })
}
