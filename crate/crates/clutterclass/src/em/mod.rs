//! EM engine for latent-class complex Gaussian mixtures.
//!
//! Each range-bin snapshot `z_k` carries a hidden class variable `c_k` with
//! priors `p_l`; conditionally on `c_k = l` the snapshot is `CN(0, M_l)`.
//! Fitting alternates the exact posterior computation (E-step) with a
//! maximization step specific to the covariance structure:
//!
//! * [`CovarianceForm::General`]: each class has an unconstrained Hermitian
//!   positive definite covariance; the M-step is the weighted sample
//!   covariance.
//! * [`CovarianceForm::ScaledCommon`]: all classes share one structure `M`
//!   scaled by a per-class power; the M-step alternates power and structure
//!   updates for `t_max` rounds.
//! * [`CovarianceForm::LowRankNoise`]: each class is white noise of common
//!   power plus a low-rank clutter term; the M-step clamps the eigenvalues of
//!   the weighted scatter matrices, and the clutter ranks may be re-estimated
//!   every iteration with an information-criterion rule.
//!
//! The per-class log-density work is done in the log domain throughout, so
//! power spreads of 50 dB and more do not underflow the responsibilities.

mod msteps;
mod posterior;

pub use msteps::{
    clamp_clutter, estimate_ranks, m_step_general, m_step_lowrank, m_step_scaled, LowRankMStep,
};
pub use posterior::{e_step, log_likelihood, update_priors};

use crate::numerics::{hermitian_eig, HermitianMatrix, NumericsError, SnapshotSet};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fraction of `K` below which a class's total responsibility counts as
/// collapsed.
pub const CLASS_COLLAPSE_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum EmError {
    #[error("class {class} collapsed (total responsibility below {CLASS_COLLAPSE_TOL:e}·K) at EM iteration {iteration}")]
    ClassCollapse { class: usize, iteration: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid mixture parameters: {0}")]
    InvalidParams(String),
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
}

impl EmError {
    fn at_iteration(self, h: usize) -> Self {
        match self {
            EmError::ClassCollapse { class, .. } => EmError::ClassCollapse { class, iteration: h },
            other => other,
        }
    }
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// The three covariance parameterizations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceModel {
    /// Unconstrained Hermitian positive definite covariance per class.
    General { class_covs: Vec<HermitianMatrix> },
    /// Shared structure with per-class power scaling; the shared matrix is
    /// gauge-fixed to `trace(M) = N`.
    ScaledCommon { common: HermitianMatrix, powers: Vec<f64> },
    /// Common white-noise power plus per-class low-rank clutter.
    LowRankNoise {
        noise_power: f64,
        clutter: Vec<HermitianMatrix>,
        ranks: Vec<usize>,
    },
}

/// Tag naming a covariance parameterization without its contents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceForm {
    General,
    ScaledCommon,
    LowRankNoise,
}

/// Full mixture parameter vector: class priors plus covariance model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureParams {
    pub priors: Vec<f64>,
    pub covariance: CovarianceModel,
}

impl MixtureParams {
    pub fn class_count(&self) -> usize {
        match &self.covariance {
            CovarianceModel::General { class_covs } => class_covs.len(),
            CovarianceModel::ScaledCommon { powers, .. } => powers.len(),
            CovarianceModel::LowRankNoise { clutter, .. } => clutter.len(),
        }
    }

    pub fn dim(&self) -> usize {
        match &self.covariance {
            CovarianceModel::General { class_covs } => {
                class_covs.first().map_or(0, HermitianMatrix::dim)
            }
            CovarianceModel::ScaledCommon { common, .. } => common.dim(),
            CovarianceModel::LowRankNoise { clutter, .. } => {
                clutter.first().map_or(0, HermitianMatrix::dim)
            }
        }
    }

    pub fn form(&self) -> CovarianceForm {
        match &self.covariance {
            CovarianceModel::General { .. } => CovarianceForm::General,
            CovarianceModel::ScaledCommon { .. } => CovarianceForm::ScaledCommon,
            CovarianceModel::LowRankNoise { .. } => CovarianceForm::LowRankNoise,
        }
    }

    /// Cheap structural checks: prior simplex, consistent lengths, positive
    /// scalars. Does not factorize any matrix.
    pub fn validate_structure(&self) -> Result<(), EmError> {
        let l = self.class_count();
        if l == 0 {
            return Err(EmError::InvalidParams("no classes".into()));
        }
        if self.priors.len() != l {
            return Err(EmError::InvalidParams(format!(
                "priors length {} does not match {l} classes",
                self.priors.len()
            )));
        }
        if self.priors.iter().any(|&p| !(0.0..=1.0 + 1e-12).contains(&p)) {
            return Err(EmError::InvalidParams("priors must lie in [0, 1]".into()));
        }
        let sum: f64 = self.priors.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(EmError::InvalidParams(format!("priors sum to {sum}, not 1")));
        }
        let n = self.dim();
        match &self.covariance {
            CovarianceModel::General { class_covs } => {
                if class_covs.iter().any(|m| m.dim() != n) {
                    return Err(EmError::InvalidParams("class covariances differ in dimension".into()));
                }
            }
            CovarianceModel::ScaledCommon { powers, .. } => {
                if powers.iter().any(|&p| p <= 0.0 || !p.is_finite()) {
                    return Err(EmError::InvalidParams("class powers must be positive and finite".into()));
                }
            }
            CovarianceModel::LowRankNoise { noise_power, clutter, ranks } => {
                if *noise_power <= 0.0 || !noise_power.is_finite() {
                    return Err(EmError::InvalidParams(format!(
                        "noise power must be positive and finite, got {noise_power}"
                    )));
                }
                if clutter.iter().any(|m| m.dim() != n) {
                    return Err(EmError::InvalidParams("clutter matrices differ in dimension".into()));
                }
                if ranks.len() != l {
                    return Err(EmError::InvalidParams(format!(
                        "ranks length {} does not match {l} classes",
                        ranks.len()
                    )));
                }
                if ranks.iter().any(|&r| r == 0 || r >= n) {
                    return Err(EmError::InvalidParams(format!(
                        "ranks must lie in [1, {}], got {ranks:?}",
                        n - 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Full validation including positive definiteness, the `trace(M) = N`
    /// gauge, and PSD/rank constraints on clutter terms.
    pub fn validate(&self) -> Result<(), EmError> {
        self.validate_structure()?;
        match &self.covariance {
            CovarianceModel::General { class_covs } => {
                for (l, m) in class_covs.iter().enumerate() {
                    if crate::numerics::cholesky_pd(m).is_err() {
                        return Err(EmError::InvalidParams(format!(
                            "class {} covariance is not positive definite",
                            l + 1
                        )));
                    }
                }
            }
            CovarianceModel::ScaledCommon { common, .. } => {
                if crate::numerics::cholesky_pd(common).is_err() {
                    return Err(EmError::InvalidParams("common structure is not positive definite".into()));
                }
                let n = common.dim() as f64;
                if (common.trace() - n).abs() > 1e-8 * n {
                    return Err(EmError::InvalidParams(format!(
                        "common structure violates the trace(M) = N gauge: trace = {}",
                        common.trace()
                    )));
                }
            }
            CovarianceModel::LowRankNoise { clutter, ranks, .. } => {
                for (l, (r_mat, &r)) in clutter.iter().zip(ranks).enumerate() {
                    let eig = hermitian_eig(r_mat)?;
                    let tol = 1e-10 * r_mat.trace().max(f64::MIN_POSITIVE);
                    if eig.eigenvalues.iter().any(|&v| v < -tol) {
                        return Err(EmError::InvalidParams(format!(
                            "class {} clutter is not positive semidefinite",
                            l + 1
                        )));
                    }
                    let effective = eig.eigenvalues.iter().filter(|&&v| v > tol).count();
                    if effective > r {
                        return Err(EmError::InvalidParams(format!(
                            "class {} clutter has rank {effective} > declared rank {r}",
                            l + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Reindex classes: new class `i` takes the parameters of old class
    /// `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.class_count());
        let priors = perm.iter().map(|&i| self.priors[i]).collect();
        let covariance = match &self.covariance {
            CovarianceModel::General { class_covs } => CovarianceModel::General {
                class_covs: perm.iter().map(|&i| class_covs[i].clone()).collect(),
            },
            CovarianceModel::ScaledCommon { common, powers } => CovarianceModel::ScaledCommon {
                common: common.clone(),
                powers: perm.iter().map(|&i| powers[i]).collect(),
            },
            CovarianceModel::LowRankNoise { noise_power, clutter, ranks } => {
                CovarianceModel::LowRankNoise {
                    noise_power: *noise_power,
                    clutter: perm.iter().map(|&i| clutter[i].clone()).collect(),
                    ranks: perm.iter().map(|&i| ranks[i]).collect(),
                }
            }
        };
        MixtureParams { priors, covariance }
    }
}

// ---------------------------------------------------------------------------
// Responsibilities
// ---------------------------------------------------------------------------

/// The K×L posterior table `q_k(l)` produced by the E-step.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    table: DMatrix<f64>,
}

impl Responsibilities {
    /// Validate that rows are probability vectors (entries in `[0, 1]`, rows
    /// summing to 1 within `1e-12`).
    pub fn new(table: DMatrix<f64>) -> Result<Self, EmError> {
        if table.nrows() == 0 || table.ncols() == 0 {
            return Err(EmError::InvalidParams("empty responsibility table".into()));
        }
        for k in 0..table.nrows() {
            let mut sum = 0.0;
            for l in 0..table.ncols() {
                let v = table[(k, l)];
                if !(0.0..=1.0 + 1e-12).contains(&v) {
                    return Err(EmError::InvalidParams(format!(
                        "responsibility ({k},{l}) = {v} outside [0, 1]"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(EmError::InvalidParams(format!("row {k} sums to {sum}, not 1")));
            }
        }
        Ok(Self { table })
    }

    pub fn bins(&self) -> usize {
        self.table.nrows()
    }

    pub fn classes(&self) -> usize {
        self.table.ncols()
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.table[(k, l)]
    }

    /// Total responsibility mass of class `l` (0-based): `Σ_k q_k(l)`.
    pub fn class_weight(&self, l: usize) -> f64 {
        self.table.column(l).sum()
    }

    pub fn table(&self) -> &DMatrix<f64> {
        &self.table
    }
}

// ---------------------------------------------------------------------------
// Fit configuration and result
// ---------------------------------------------------------------------------

/// Model-order-selection rule used to pick clutter ranks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MosRule {
    Aic,
    Gic { a: f64 },
    Bic,
}

impl MosRule {
    /// Penalty weight `k_p` applied per free parameter.
    pub fn penalty_weight(&self, k_bins: usize, n_channels: usize) -> f64 {
        match self {
            MosRule::Aic => 2.0,
            MosRule::Gic { a } => 1.0 + a,
            MosRule::Bic => (2.0 * k_bins as f64 * n_channels as f64).ln(),
        }
    }
}

/// Configuration of one EM fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub form: CovarianceForm,
    /// Number of classes `L`.
    pub classes: usize,
    /// Maximum EM iterations.
    pub h_max: usize,
    /// Inner cyclic iterations of the scaled-common M-step.
    pub t_max: usize,
    pub mos_rule: MosRule,
    /// Known clutter ranks; `None` re-estimates ranks every iteration.
    pub ranks: Option<Vec<usize>>,
    /// Relative log-likelihood early-stop tolerance; 0 runs all `h_max`.
    pub ll_tol: f64,
    /// Ridge regularization scale for numerically singular M-step outputs.
    pub ridge_eps: f64,
}

impl FitConfig {
    pub fn new(form: CovarianceForm, classes: usize) -> Self {
        FitConfig {
            form,
            classes,
            h_max: 10,
            t_max: 10,
            mos_rule: MosRule::Gic { a: 2.0 },
            ranks: None,
            ll_tol: 0.0,
            ridge_eps: 1e-8,
        }
    }

    pub fn with_ranks(mut self, ranks: Vec<usize>) -> Self {
        self.ranks = Some(ranks);
        self
    }

    pub fn validate(&self) -> Result<(), EmError> {
        if self.classes == 0 {
            return Err(EmError::InvalidConfig("classes must be at least 1".into()));
        }
        if self.h_max == 0 {
            return Err(EmError::InvalidConfig("h_max must be at least 1".into()));
        }
        if self.t_max == 0 {
            return Err(EmError::InvalidConfig("t_max must be at least 1".into()));
        }
        if let MosRule::Gic { a } = self.mos_rule {
            if a < 1.0 || a.is_nan() {
                return Err(EmError::InvalidConfig(format!("GIC requires a >= 1, got {a}")));
            }
        }
        if self.ll_tol < 0.0 || self.ll_tol.is_nan() {
            return Err(EmError::InvalidConfig("ll_tol must be nonnegative".into()));
        }
        if self.ridge_eps <= 0.0 || self.ridge_eps.is_nan() {
            return Err(EmError::InvalidConfig("ridge_eps must be positive".into()));
        }
        if let Some(ranks) = &self.ranks {
            if ranks.len() != self.classes {
                return Err(EmError::InvalidConfig(format!(
                    "ranks length {} does not match {} classes",
                    ranks.len(),
                    self.classes
                )));
            }
        }
        Ok(())
    }
}

/// Counters for numerical interventions during a fit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// M-step outputs that needed ridge regularization.
    pub ridge_events: usize,
    /// Noise-power estimates that hit the positivity floor.
    pub noise_floor_events: usize,
    /// Iterations whose log-likelihood dropped by more than 1e-6 relative.
    pub ll_decrease_events: usize,
}

/// Output of [`run_em`].
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: MixtureParams,
    /// Posterior table under the final parameters.
    pub responsibilities: Responsibilities,
    /// Hard labels in `1..=L`, argmax of the final posteriors.
    pub labels: Vec<usize>,
    /// Log-likelihood at initialization and after each EM iteration.
    pub ll_trace: Vec<f64>,
    /// Selected ranks per iteration (unknown-rank low-rank fits only).
    pub rank_trace: Vec<Vec<usize>>,
    pub iterations_run: usize,
    pub diagnostics: FitDiagnostics,
}

// ---------------------------------------------------------------------------
// The EM loop
// ---------------------------------------------------------------------------

/// Run EM from the supplied initial parameters.
///
/// Iterates E-step, priors update, and the form-specific M-step for up to
/// `h_max` iterations, recording the log-likelihood after each. For the
/// low-rank form with unknown ranks, the ranks are re-estimated every
/// iteration from the current scatter eigendecompositions and noise power,
/// and the clutter estimates are rebuilt under the newly selected ranks.
pub fn run_em(
    z: &SnapshotSet,
    config: &FitConfig,
    init: &MixtureParams,
) -> Result<FitResult, EmError> {
    config.validate()?;
    init.validate()?;
    if init.class_count() != config.classes {
        return Err(EmError::InvalidConfig(format!(
            "init has {} classes, config expects {}",
            init.class_count(),
            config.classes
        )));
    }
    if init.form() != config.form {
        return Err(EmError::InvalidConfig(
            "init covariance form does not match config".into(),
        ));
    }
    if init.dim() != z.channels() {
        return Err(EmError::InvalidConfig(format!(
            "init dimension {} does not match {} channels",
            init.dim(),
            z.channels()
        )));
    }
    let (n, k) = (z.channels(), z.bins());
    if matches!(config.form, CovarianceForm::General | CovarianceForm::ScaledCommon) && k < n {
        return Err(EmError::InvalidConfig(format!(
            "this covariance form requires K >= N, got K = {k}, N = {n}"
        )));
    }
    // Working ranks of the low-rank M-step. The init's declared ranks only
    // describe its own matrices; the fit either holds the configured known
    // ranks or starts the re-estimation at ⌈N/2⌉.
    let mut working_ranks = match (&config.form, &config.ranks) {
        (CovarianceForm::LowRankNoise, Some(r)) => r.clone(),
        (CovarianceForm::LowRankNoise, None) => vec![n.div_ceil(2); config.classes],
        _ => Vec::new(),
    };

    let collapse_floor = CLASS_COLLAPSE_TOL * k as f64;
    let mut params = init.clone();
    let mut diagnostics = FitDiagnostics::default();
    let mut ll_trace = vec![log_likelihood(z, &params)?];
    let mut rank_trace: Vec<Vec<usize>> = Vec::new();
    let mut iterations_run = 0;

    for h in 1..=config.h_max {
        let q = e_step(z, &params).map_err(|e| e.at_iteration(h))?;
        for l in 0..config.classes {
            if q.class_weight(l) < collapse_floor {
                return Err(EmError::ClassCollapse { class: l + 1, iteration: h });
            }
        }
        let priors = update_priors(&q);

        let covariance = match (&config.form, &params.covariance) {
            (CovarianceForm::General, _) => {
                let (class_covs, ridge) = m_step_general(z, &q, config.ridge_eps)
                    .map_err(|e| e.at_iteration(h))?;
                diagnostics.ridge_events += ridge;
                CovarianceModel::General { class_covs }
            }
            (CovarianceForm::ScaledCommon, CovarianceModel::ScaledCommon { common, .. }) => {
                let (powers, common, ridge) =
                    m_step_scaled(z, &q, common, config.t_max, config.ridge_eps)
                        .map_err(|e| e.at_iteration(h))?;
                diagnostics.ridge_events += ridge;
                CovarianceModel::ScaledCommon { common, powers }
            }
            (CovarianceForm::LowRankNoise, CovarianceModel::LowRankNoise { .. }) => {
                let step = m_step_lowrank(z, &q, &working_ranks).map_err(|e| e.at_iteration(h))?;
                if step.floored {
                    diagnostics.noise_floor_events += 1;
                }
                if config.ranks.is_some() {
                    CovarianceModel::LowRankNoise {
                        noise_power: step.noise_power,
                        clutter: step.clutter,
                        ranks: working_ranks.clone(),
                    }
                } else {
                    working_ranks =
                        estimate_ranks(&step.eigs, &q, step.noise_power, config.mos_rule, k, n);
                    let clutter = clamp_clutter(&step.eigs, &q, step.noise_power, &working_ranks);
                    rank_trace.push(working_ranks.clone());
                    CovarianceModel::LowRankNoise {
                        noise_power: step.noise_power,
                        clutter,
                        ranks: working_ranks.clone(),
                    }
                }
            }
            _ => unreachable!("form consistency is validated above"),
        };

        params = MixtureParams { priors, covariance };
        let ll = log_likelihood(z, &params).map_err(|e| e.at_iteration(h))?;
        let prev = *ll_trace.last().unwrap();
        if ll < prev - 1e-6 * prev.abs() {
            log::warn!("log-likelihood decreased at iteration {h}: {prev} -> {ll}");
            diagnostics.ll_decrease_events += 1;
        }
        ll_trace.push(ll);
        iterations_run = h;
        if config.ll_tol > 0.0 && (ll - prev).abs() <= config.ll_tol * prev.abs() {
            break;
        }
    }

    let responsibilities = e_step(z, &params)?;
    let labels = classify(&responsibilities);
    Ok(FitResult {
        params,
        responsibilities,
        labels,
        ll_trace,
        rank_trace,
        iterations_run,
        diagnostics,
    })
}

/// Hard classification: per-row argmax of the posterior table, returning
/// labels in `1..=L` with the lowest index winning exact ties.
pub fn classify(q: &Responsibilities) -> Vec<usize> {
    (0..q.bins())
        .map(|k| {
            let mut best = 0;
            for l in 1..q.classes() {
                if q.get(k, l) > q.get(k, best) {
                    best = l;
                }
            }
            best + 1
        })
        .collect()
}
