//! Initial parameter estimates for the EM fits.
//!
//! The default recipe draws a random Hermitian structure, whitens every
//! snapshot by it, and splits the sorted whitened powers into `L` chunks
//! whose means seed the per-class power levels. Class indices therefore
//! start out ordered by ascending power, which is the index convention the
//! evaluation module's direct label matching relies on.

use crate::em::{CovarianceForm, CovarianceModel, EmError, FitConfig, MixtureParams};
use crate::numerics::{
    hermitian_eig, inverse_and_logdet, quad_form, C64, CMatrix, HermitianMatrix, SnapshotSet,
};
use crate::rng::substream;
use rand::Rng;
use rand_distr::StandardNormal;

/// How to obtain the starting parameters of a fit.
#[derive(Debug, Clone)]
pub struct InitRecipe {
    pub kind: InitKind,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum InitKind {
    /// The randomized whitened-power recipe implemented by [`init_params`].
    PaperDefault,
    /// Caller-provided parameters, validated before use.
    UserSupplied(MixtureParams),
}

impl InitRecipe {
    pub fn resolve(&self, z: &SnapshotSet, config: &FitConfig) -> Result<MixtureParams, EmError> {
        match &self.kind {
            InitKind::PaperDefault => {
                let mut rng = substream(self.seed, "init", 0);
                init_params(z, config.classes, config.form, &mut rng)
            }
            InitKind::UserSupplied(params) => {
                params.validate()?;
                Ok(params.clone())
            }
        }
    }
}

/// Mean of each of `l` contiguous chunks of an ascending-sorted slice.
/// Chunks have `⌊len/l⌋` entries, the remainder going to the last chunk.
fn chunk_means(sorted: &[f64], l: usize) -> Vec<f64> {
    let base = sorted.len() / l;
    (0..l)
        .map(|li| {
            let start = li * base;
            let end = if li + 1 == l { sorted.len() } else { start + base };
            sorted[start..end].iter().sum::<f64>() / (end - start) as f64
        })
        .collect()
}

/// Compute the default initial parameters for `l` classes under the given
/// covariance form.
pub fn init_params<R: Rng + ?Sized>(
    z: &SnapshotSet,
    l: usize,
    form: CovarianceForm,
    rng: &mut R,
) -> Result<MixtureParams, EmError> {
    let (n, k) = (z.channels(), z.bins());
    if l == 0 {
        return Err(EmError::InvalidConfig("need at least one class".into()));
    }
    if k < n {
        return Err(EmError::InvalidConfig(format!(
            "initialization needs K >= N for an invertible structure, got K = {k}, N = {n}"
        )));
    }

    // Random Hermitian structure S = XX†/trace(XX†).
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let x = CMatrix::from_fn(n, k, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * scale, im * scale)
    });
    let gram = HermitianMatrix::symmetrized(&x * x.adjoint());
    let s = gram.scaled(1.0 / gram.trace());
    let (s_inv, _) = inverse_and_logdet(&s)?;

    // Whitened power of every snapshot, sorted ascending.
    let mut g: Vec<f64> = (0..k)
        .map(|kk| quad_form(&z.column(kk), &s_inv).map(|v| v / n as f64))
        .collect::<Result<_, _>>()?;
    g.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let raw_powers = chunk_means(&g, l);

    let priors = vec![1.0 / l as f64; l];
    let gauge_scale = s.trace() / n as f64;
    let covariance = match form {
        CovarianceForm::ScaledCommon => CovarianceModel::ScaledCommon {
            common: s.scaled(1.0 / gauge_scale),
            powers: raw_powers.iter().map(|&p| p * gauge_scale).collect(),
        },
        CovarianceForm::General => CovarianceModel::General {
            class_covs: raw_powers.iter().map(|&p| s.scaled(p)).collect(),
        },
        CovarianceForm::LowRankNoise => {
            // The whitened powers g live on the trace scale (tr(c·S) = c for
            // data distributed as CN(0, c·S)), so the minimum class power
            // converts to a per-channel noise floor by dividing by N. The
            // initial clutter carries the remaining class trace on a
            // rank-(N−1) truncation of the random structure: the first
            // posterior then discriminates by power over nearly the whole
            // space, exactly like the other two forms' starting points. The
            // fit's working ranks are chosen by the run configuration, not by
            // this starting point.
            let mut min_power = g[0];
            if min_power <= 0.0 || min_power.is_nan() {
                min_power = 1e-12 * (g.iter().sum::<f64>() / k as f64).max(f64::MIN_POSITIVE);
                log::warn!("minimum whitened power was nonpositive, flooring noise init at {min_power:e}");
            }
            let noise_power = min_power / n as f64;
            let r_init = n - 1;
            let eig = hermitian_eig(&s)?;
            let kept: f64 = eig.eigenvalues[..r_init].iter().filter(|&&v| v > 0.0).sum();
            let clutter = raw_powers
                .iter()
                .map(|&p| {
                    let strength = (p - min_power).max(1e-6);
                    let mut m = CMatrix::zeros(n, n);
                    for i in 0..r_init {
                        let lam = eig.eigenvalues[i].max(0.0) / kept * strength;
                        if lam > 0.0 {
                            let u = eig.eigenvectors.column(i);
                            m.gerc(C64::new(lam, 0.0), &u, &u, C64::new(1.0, 0.0));
                        }
                    }
                    HermitianMatrix::symmetrized(m)
                })
                .collect();
            CovarianceModel::LowRankNoise { noise_power, clutter, ranks: vec![r_init; l] }
        }
    };

    Ok(MixtureParams { priors, covariance })
}
