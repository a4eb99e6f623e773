//! File formats: range-profile data files, label CSVs, configuration
//! documents, fit-result JSON, and canonical (byte-reproducible) JSON output.
//!
//! Every writer here has a matching reader, and all output files re-load
//! exactly. Floats in the range-profile body are written with 17 significant
//! digits, which round-trips `f64` values bit-exactly.

use crate::em::{CovarianceForm, EmError, FitConfig, FitDiagnostics, FitResult, MosRule};
use crate::eval::{BenchmarkReport, Matching};
use crate::numerics::{C64, CMatrix, NumericsError, SnapshotSet};
use crate::scenario::{ScenarioConfig, ScenarioError};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: data row {row}: {message}")]
    Row { path: String, row: usize, message: String },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Em(#[from] EmError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

fn io_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::Io { path: path.display().to_string(), source }
}

fn json_err(path: &Path, source: serde_json::Error) -> IoError {
    IoError::Json { path: path.display().to_string(), source }
}

fn format_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Format { path: path.display().to_string(), message: message.into() }
}

// ---------------------------------------------------------------------------
// Range-profile files
// ---------------------------------------------------------------------------

const RANGE_PROFILE_LAYOUT: &str = "csv-interleaved";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RangeProfileHeader {
    n_channels: usize,
    n_bins: usize,
    layout: String,
}

/// Write a snapshot set as a range-profile file: a one-line JSON header
/// followed by `K` CSV rows of `2N` interleaved (re, im) fields.
pub fn write_range_profile(path: &Path, z: &SnapshotSet) -> Result<(), IoError> {
    let header = RangeProfileHeader {
        n_channels: z.channels(),
        n_bins: z.bins(),
        layout: RANGE_PROFILE_LAYOUT.to_string(),
    };
    let mut out = String::new();
    out.push_str(&serde_json::to_string(&header).map_err(|e| json_err(path, e))?);
    out.push('\n');
    for k in 0..z.bins() {
        let mut fields = Vec::with_capacity(2 * z.channels());
        for i in 0..z.channels() {
            let v = z.matrix()[(i, k)];
            fields.push(format!("{:.16e}", v.re));
            fields.push(format!("{:.16e}", v.im));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Load a range-profile file, validating the header and every row.
pub fn load_range_profile(path: &Path) -> Result<SnapshotSet, IoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| format_err(path, "empty file, expected a JSON header line"))?;
    let header: RangeProfileHeader =
        serde_json::from_str(header_line).map_err(|e| json_err(path, e))?;
    if header.layout != RANGE_PROFILE_LAYOUT {
        return Err(format_err(
            path,
            format!("unsupported layout {:?}, expected {RANGE_PROFILE_LAYOUT:?}", header.layout),
        ));
    }
    if header.n_channels == 0 || header.n_bins == 0 {
        return Err(format_err(path, "header dimensions must be positive"));
    }
    let (n, k) = (header.n_channels, header.n_bins);
    let mut data = CMatrix::zeros(n, k);
    let mut row = 0usize;
    for line in lines {
        if line.is_empty() {
            continue;
        }
        row += 1;
        if row > k {
            return Err(format_err(path, format!("more data rows than the {k} bins in the header")));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 * n {
            return Err(IoError::Row {
                path: path.display().to_string(),
                row,
                message: format!("expected {} fields, found {}", 2 * n, fields.len()),
            });
        }
        for i in 0..n {
            let re = parse_float(path, row, fields[2 * i])?;
            let im = parse_float(path, row, fields[2 * i + 1])?;
            data[(i, row - 1)] = C64::new(re, im);
        }
    }
    if row != k {
        return Err(format_err(path, format!("header promises {k} bins but found {row} data rows")));
    }
    Ok(SnapshotSet::new(data)?)
}

fn parse_float(path: &Path, row: usize, field: &str) -> Result<f64, IoError> {
    field.trim().parse::<f64>().map_err(|_| IoError::Row {
        path: path.display().to_string(),
        row,
        message: format!("non-numeric field {field:?}"),
    })
}

// ---------------------------------------------------------------------------
// Label CSVs
// ---------------------------------------------------------------------------

/// Write labels as `bin,label` rows with 1-based bin indices.
pub fn write_labels_csv(path: &Path, labels: &[usize]) -> Result<(), IoError> {
    let mut out = String::from("bin,label\n");
    for (k, &label) in labels.iter().enumerate() {
        out.push_str(&format!("{},{}\n", k + 1, label));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn load_labels_csv(path: &Path) -> Result<Vec<usize>, IoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut labels = Vec::new();
    for (row, line) in text.lines().enumerate() {
        if row == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(IoError::Row {
                path: path.display().to_string(),
                row,
                message: format!("expected `bin,label`, found {line:?}"),
            });
        }
        let label: usize = fields[1].trim().parse().map_err(|_| IoError::Row {
            path: path.display().to_string(),
            row,
            message: format!("non-integer label {:?}", fields[1]),
        })?;
        if label == 0 {
            return Err(IoError::Row {
                path: path.display().to_string(),
                row,
                message: "labels are 1-based".into(),
            });
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(format_err(path, "no label rows"));
    }
    Ok(labels)
}

/// Plot-ready comparison CSV: `bin,true_label,estimated_label` when truth is
/// available, `bin,estimated_label` otherwise.
pub fn write_label_comparison_csv(
    path: &Path,
    estimated: &[usize],
    truth: Option<&[usize]>,
) -> Result<(), IoError> {
    let mut out = String::new();
    match truth {
        Some(t) => {
            out.push_str("bin,true_label,estimated_label\n");
            for (k, (&e, &tr)) in estimated.iter().zip(t).enumerate() {
                out.push_str(&format!("{},{},{}\n", k + 1, tr, e));
            }
        }
        None => {
            out.push_str("bin,estimated_label\n");
            for (k, &e) in estimated.iter().enumerate() {
                out.push_str(&format!("{},{}\n", k + 1, e));
            }
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------------
// Configuration documents
// ---------------------------------------------------------------------------

fn default_h_max() -> usize {
    10
}
fn default_t_max() -> usize {
    10
}
fn default_mos() -> MosRule {
    MosRule::Gic { a: 2.0 }
}
fn default_ridge() -> f64 {
    1e-8
}
fn default_trials() -> usize {
    200
}

/// Fit configuration document: covariance form, class count, and the EM
/// knobs, all with their standard defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfigDoc {
    pub model_kind: CovarianceForm,
    pub classes: usize,
    #[serde(default = "default_h_max")]
    pub h_max: usize,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    #[serde(default = "default_mos")]
    pub mos_rule: MosRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranks: Option<Vec<usize>>,
    #[serde(default)]
    pub ll_tol: f64,
    #[serde(default = "default_ridge")]
    pub ridge_eps: f64,
    /// Master seed of the initialization substream.
    #[serde(default)]
    pub seed: u64,
}

impl FitConfigDoc {
    pub fn to_fit_config(&self) -> FitConfig {
        FitConfig {
            form: self.model_kind,
            classes: self.classes,
            h_max: self.h_max,
            t_max: self.t_max,
            mos_rule: self.mos_rule,
            ranks: self.ranks.clone(),
            ll_tol: self.ll_tol,
            ridge_eps: self.ridge_eps,
        }
    }
}

/// Benchmark document: one scenario, one method, optional matching mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfigDoc {
    pub scenario: ScenarioConfig,
    pub fit: FitConfigDoc,
    #[serde(default)]
    pub matching: Matching,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedScenario {
    pub name: String,
    pub scenario: ScenarioConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedMethod {
    pub name: String,
    pub fit: FitConfigDoc,
}

/// Grid document: a scenario×method matrix benchmarked at a common trial
/// count and master seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TablesConfigDoc {
    pub scenarios: Vec<NamedScenario>,
    pub methods: Vec<NamedMethod>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub matching: Matching,
}

pub fn parse_scenario_config(path: &Path) -> Result<ScenarioConfig, IoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let config: ScenarioConfig = serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
    config.validate()?;
    Ok(config)
}

pub fn parse_fit_config(path: &Path) -> Result<FitConfigDoc, IoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let doc: FitConfigDoc = serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
    doc.to_fit_config().validate()?;
    Ok(doc)
}

pub fn parse_benchmark_config(path: &Path) -> Result<BenchmarkConfigDoc, IoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let doc: BenchmarkConfigDoc = serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
    doc.scenario.validate()?;
    doc.fit.to_fit_config().validate()?;
    Ok(doc)
}

pub fn parse_tables_config(path: &Path) -> Result<TablesConfigDoc, IoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let doc: TablesConfigDoc = serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
    if doc.scenarios.is_empty() || doc.methods.is_empty() {
        return Err(format_err(path, "need at least one scenario and one method"));
    }
    if doc.trials == 0 {
        return Err(format_err(path, "trials must be positive"));
    }
    for named in &doc.scenarios {
        named.scenario.validate()?;
    }
    for named in &doc.methods {
        named.fit.to_fit_config().validate()?;
    }
    Ok(doc)
}

// ---------------------------------------------------------------------------
// Fit results
// ---------------------------------------------------------------------------

/// Serialized fit output (the posterior table is omitted; labels are its
/// argmax).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResultDoc {
    pub params: crate::em::MixtureParams,
    pub labels: Vec<usize>,
    pub ll_trace: Vec<f64>,
    pub rank_trace: Vec<Vec<usize>>,
    pub iterations_run: usize,
    pub diagnostics: FitDiagnostics,
}

impl From<&FitResult> for FitResultDoc {
    fn from(fit: &FitResult) -> Self {
        FitResultDoc {
            params: fit.params.clone(),
            labels: fit.labels.clone(),
            ll_trace: fit.ll_trace.clone(),
            rank_trace: fit.rank_trace.clone(),
            iterations_run: fit.iterations_run,
            diagnostics: fit.diagnostics,
        }
    }
}

pub fn write_fit_result(path: &Path, doc: &FitResultDoc) -> Result<(), IoError> {
    write_canonical_json(path, doc, &[])
}

pub fn read_fit_result(path: &Path) -> Result<FitResultDoc, IoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let doc: FitResultDoc = serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
    doc.params.validate_structure()?;
    Ok(doc)
}

// ---------------------------------------------------------------------------
// Reports and canonical JSON
// ---------------------------------------------------------------------------

/// Serialize to a canonical JSON value: object keys sorted, and the listed
/// top-level keys (time-like, non-reproducible fields) removed.
pub fn canonical_value<T: Serialize>(
    value: &T,
    strip_keys: &[&str],
) -> Result<serde_json::Value, serde_json::Error> {
    let mut v = serde_json::to_value(value)?;
    if let serde_json::Value::Object(map) = &mut v {
        for key in strip_keys {
            map.remove(*key);
        }
    }
    Ok(v)
}

/// Write canonical JSON (sorted keys, fixed float formatting, trailing
/// newline) so identical inputs produce byte-identical files.
pub fn write_canonical_json<T: Serialize>(
    path: &Path,
    value: &T,
    strip_keys: &[&str],
) -> Result<(), IoError> {
    let v = canonical_value(value, strip_keys).map_err(|e| json_err(path, e))?;
    let mut text = serde_json::to_string_pretty(&v).map_err(|e| json_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Keys excluded from canonical benchmark reports (wall-clock measurements).
pub const REPORT_NONCANONICAL_KEYS: &[&str] = &["mean_runtime_ms"];

pub fn write_benchmark_report(path: &Path, report: &BenchmarkReport) -> Result<(), IoError> {
    write_canonical_json(path, report, REPORT_NONCANONICAL_KEYS)
}

pub fn read_benchmark_report(path: &Path) -> Result<BenchmarkReport, IoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    // The canonical form drops the runtime field; restore a default.
    let mut v: serde_json::Value = serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
    if let serde_json::Value::Object(map) = &mut v {
        map.entry("mean_runtime_ms").or_insert(serde_json::json!(0.0));
    }
    serde_json::from_value(v).map_err(|e| json_err(path, e))
}

/// Histogram CSV: `error_count,frequency` rows in ascending error order.
pub fn write_histogram_csv(path: &Path, report: &BenchmarkReport) -> Result<(), IoError> {
    let mut out = String::from("error_count,frequency\n");
    for (&err, &freq) in &report.error_histogram {
        out.push_str(&format!("{err},{freq}\n"));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// RMSCE grid over a scenario×method matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RmsceGrid {
    pub scenarios: Vec<String>,
    pub methods: Vec<String>,
    pub trials: usize,
    pub seed: u64,
    /// `rmsce[i][j]` is scenario `i` under method `j`.
    pub rmsce: Vec<Vec<f64>>,
    pub failed_trials: Vec<Vec<usize>>,
}

pub fn write_grid_json(path: &Path, grid: &RmsceGrid) -> Result<(), IoError> {
    write_canonical_json(path, grid, &[])
}

/// Grid CSV: one row per scenario, one column per method.
pub fn write_grid_csv(path: &Path, grid: &RmsceGrid) -> Result<(), IoError> {
    let mut out = String::from("scenario");
    for m in &grid.methods {
        out.push(',');
        out.push_str(m);
    }
    out.push('\n');
    for (i, s) in grid.scenarios.iter().enumerate() {
        out.push_str(s);
        for v in &grid.rmsce[i] {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Machine-readable error document emitted on command failure.
pub fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}
