//! Log-domain mixture density evaluation: joint log-likelihood, E-step
//! posteriors, and the priors update.

use super::{CovarianceModel, EmError, MixtureParams, Responsibilities};
use crate::numerics::{inverse_and_logdet, quad_form, HermitianMatrix, SnapshotSet};
use nalgebra::DMatrix;

const LN_PI: f64 = 1.1447298858494002;

/// Per-class inverse covariances and log-determinants, precomputed once per
/// parameter vector.
struct ClassDensities {
    log_priors: Vec<f64>,
    inverses: Vec<HermitianMatrix>,
    logdets: Vec<f64>,
    n: usize,
}

impl ClassDensities {
    fn build(params: &MixtureParams) -> Result<Self, EmError> {
        params.validate_structure()?;
        let n = params.dim();
        let log_priors = params.priors.iter().map(|&p| p.ln()).collect();
        let (inverses, logdets) = match &params.covariance {
            CovarianceModel::General { class_covs } => {
                let mut inverses = Vec::with_capacity(class_covs.len());
                let mut logdets = Vec::with_capacity(class_covs.len());
                for m in class_covs {
                    let (inv, ld) = inverse_and_logdet(m)?;
                    inverses.push(inv);
                    logdets.push(ld);
                }
                (inverses, logdets)
            }
            CovarianceModel::ScaledCommon { common, powers } => {
                // M_l = σ²_l M, so M_l⁻¹ = M⁻¹/σ²_l and
                // logdet M_l = N ln σ²_l + logdet M.
                let (inv, ld) = inverse_and_logdet(common)?;
                let inverses = powers.iter().map(|&p| inv.scaled(1.0 / p)).collect();
                let logdets = powers.iter().map(|&p| ld + n as f64 * p.ln()).collect();
                (inverses, logdets)
            }
            CovarianceModel::LowRankNoise { noise_power, clutter, .. } => {
                let mut inverses = Vec::with_capacity(clutter.len());
                let mut logdets = Vec::with_capacity(clutter.len());
                for r in clutter {
                    let m = r.add_scaled_identity(*noise_power);
                    let (inv, ld) = inverse_and_logdet(&m)?;
                    inverses.push(inv);
                    logdets.push(ld);
                }
                (inverses, logdets)
            }
        };
        Ok(ClassDensities { log_priors, inverses, logdets, n })
    }

    /// `ln p_l + ln f(z | c = l; M_l)` for every class, one snapshot.
    fn log_terms(&self, z: &nalgebra::DVector<crate::numerics::C64>) -> Result<Vec<f64>, EmError> {
        self.log_priors
            .iter()
            .zip(&self.inverses)
            .zip(&self.logdets)
            .map(|((&lp, inv), &ld)| {
                let q = quad_form(z, inv)?;
                Ok(lp - self.n as f64 * LN_PI - ld - q)
            })
            .collect()
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|&t| (t - max).exp()).sum::<f64>().ln()
}

/// Joint log-likelihood `Σ_k ln Σ_l p_l f(z_k | c_k = l; M_l)`, evaluated in
/// the log domain (per-class log-pdfs combined by log-sum-exp).
pub fn log_likelihood(z: &SnapshotSet, params: &MixtureParams) -> Result<f64, EmError> {
    check_dims(z, params)?;
    let densities = ClassDensities::build(params)?;
    let mut total = 0.0;
    for k in 0..z.bins() {
        let terms = densities.log_terms(&z.column(k))?;
        let ll = log_sum_exp(&terms);
        if !ll.is_finite() {
            return Err(EmError::InvalidParams(format!(
                "degenerate mixture density at bin {k}: all class terms vanished"
            )));
        }
        total += ll;
    }
    Ok(total)
}

/// E-step: posterior table `q_k(l) ∝ p_l f(z_k | c_k = l; M_l)`, each row
/// normalized after shifting by its maximum log-term.
pub fn e_step(z: &SnapshotSet, params: &MixtureParams) -> Result<Responsibilities, EmError> {
    check_dims(z, params)?;
    let densities = ClassDensities::build(params)?;
    let l_count = params.class_count();
    let mut table = DMatrix::zeros(z.bins(), l_count);
    for k in 0..z.bins() {
        let terms = densities.log_terms(&z.column(k))?;
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(EmError::InvalidParams(format!(
                "degenerate mixture density at bin {k}: all class terms vanished"
            )));
        }
        let mut sum = 0.0;
        for (l, &t) in terms.iter().enumerate() {
            let v = (t - max).exp();
            table[(k, l)] = v;
            sum += v;
        }
        for l in 0..l_count {
            table[(k, l)] /= sum;
        }
    }
    Responsibilities::new(table)
}

/// Priors update: `p̂_l = (1/K) Σ_k q_k(l)`.
pub fn update_priors(q: &Responsibilities) -> Vec<f64> {
    let k = q.bins() as f64;
    (0..q.classes()).map(|l| q.class_weight(l) / k).collect()
}

fn check_dims(z: &SnapshotSet, params: &MixtureParams) -> Result<(), EmError> {
    if z.channels() != params.dim() {
        return Err(EmError::InvalidParams(format!(
            "snapshot dimension {} does not match parameter dimension {}",
            z.channels(),
            params.dim()
        )));
    }
    Ok(())
}
