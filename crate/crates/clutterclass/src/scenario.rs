//! Synthetic scenario construction: structured clutter covariance models and
//! labeled multi-class snapshot generation.

use crate::em::{CovarianceModel, MixtureParams};
use crate::numerics::{
    sample_complex_gaussian, C64, CMatrix, CVector, HermitianMatrix, NumericsError, SnapshotSet,
};
use crate::rng::substream;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: field `{field}`: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

fn invalid(field: &'static str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::InvalidConfig { field, message: message.into() }
}

/// Power in dB to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Which generative covariance structure a scenario uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    /// Per-class power times a common AR(1) Toeplitz structure.
    ScaledAR1,
    /// Per-class angular-patch clutter plus white thermal noise.
    PatchesPlusNoise,
}

/// Generative description of one synthetic experiment.
///
/// Serialized as a strict JSON document: exactly these snake_case keys,
/// unknown keys rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of channels `N`.
    pub n: usize,
    /// Per-class snapshot counts `K_1..K_L`.
    pub class_sizes: Vec<usize>,
    pub model_kind: ModelKind,
    /// AR(1) one-lag correlation (ScaledAR1 only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// Per-class clutter powers in dB.
    pub clutter_powers_db: Vec<f64>,
    /// Thermal noise power in dB (PatchesPlusNoise only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_power_db: Option<f64>,
    /// Per-class patch angle sets in degrees (PatchesPlusNoise only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles_deg: Option<Vec<Vec<f64>>>,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn classes(&self) -> usize {
        self.class_sizes.len()
    }

    pub fn total_bins(&self) -> usize {
        self.class_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n < 2 {
            return Err(invalid("n", "must be at least 2"));
        }
        if self.class_sizes.is_empty() {
            return Err(invalid("class_sizes", "must be nonempty"));
        }
        if self.class_sizes.contains(&0) {
            return Err(invalid("class_sizes", "every class size must be positive"));
        }
        let l = self.classes();
        if self.clutter_powers_db.len() != l {
            return Err(invalid(
                "clutter_powers_db",
                format!("expected {l} entries (one per class), got {}", self.clutter_powers_db.len()),
            ));
        }
        if self.clutter_powers_db.iter().any(|p| !p.is_finite()) {
            return Err(invalid("clutter_powers_db", "entries must be finite"));
        }
        match self.model_kind {
            ModelKind::ScaledAR1 => {
                let rho = self.rho.ok_or_else(|| invalid("rho", "required for ScaledAR1"))?;
                if !(0.0..1.0).contains(&rho) {
                    return Err(invalid("rho", format!("must lie in [0, 1), got {rho}")));
                }
                if self.noise_power_db.is_some() {
                    return Err(invalid("noise_power_db", "not applicable to ScaledAR1"));
                }
                if self.angles_deg.is_some() {
                    return Err(invalid("angles_deg", "not applicable to ScaledAR1"));
                }
            }
            ModelKind::PatchesPlusNoise => {
                if self.rho.is_some() {
                    return Err(invalid("rho", "not applicable to PatchesPlusNoise"));
                }
                let noise = self
                    .noise_power_db
                    .ok_or_else(|| invalid("noise_power_db", "required for PatchesPlusNoise"))?;
                if !noise.is_finite() {
                    return Err(invalid("noise_power_db", "must be finite"));
                }
                let angles = self
                    .angles_deg
                    .as_ref()
                    .ok_or_else(|| invalid("angles_deg", "required for PatchesPlusNoise"))?;
                if angles.len() != l {
                    return Err(invalid(
                        "angles_deg",
                        format!("expected {l} angle sets (one per class), got {}", angles.len()),
                    ));
                }
                if angles.iter().any(|set| set.is_empty()) {
                    return Err(invalid("angles_deg", "every class needs at least one angle"));
                }
            }
        }
        Ok(())
    }

    /// The true per-class covariance matrices implied by this config.
    pub fn class_covariances(&self) -> Result<Vec<HermitianMatrix>, ScenarioError> {
        self.validate()?;
        let powers: Vec<f64> = self.clutter_powers_db.iter().map(|&db| db_to_linear(db)).collect();
        match self.model_kind {
            ModelKind::ScaledAR1 => {
                let common = covar_ar1(self.n, self.rho.unwrap())?;
                Ok(powers.iter().map(|&p| common.scaled(p)).collect())
            }
            ModelKind::PatchesPlusNoise => {
                let noise = db_to_linear(self.noise_power_db.unwrap());
                let angles = self.angles_deg.as_ref().unwrap();
                powers
                    .iter()
                    .zip(angles)
                    .map(|(&p, set)| covar_patches(self.n, set, p, noise))
                    .collect()
            }
        }
    }
}

/// Snapshots together with the ground truth that generated them.
#[derive(Debug, Clone)]
pub struct LabeledSnapshotSet {
    pub snapshots: SnapshotSet,
    /// Class of each range bin, values in `1..=L`, laid out in contiguous
    /// blocks ordered class 1 first.
    pub true_labels: Vec<usize>,
    pub true_params: MixtureParams,
}

/// AR(1) Toeplitz covariance with entry `(i, j) = rho^|i-j|`.
pub fn covar_ar1(n: usize, rho: f64) -> Result<HermitianMatrix, ScenarioError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(invalid("rho", format!("must lie in [0, 1), got {rho}")));
    }
    let m = CMatrix::from_fn(n, n, |i, j| {
        C64::new(rho.powi((i as i32 - j as i32).abs()), 0.0)
    });
    Ok(HermitianMatrix::new(m).expect("AR(1) matrix is Hermitian by construction"))
}

/// Unit-norm spatial steering vector of a half-wavelength uniform linear
/// array: `v(θ) = (1/√N)·[1, e^{jπ sinθ}, …, e^{jπ(N−1) sinθ}]`.
pub fn steering_vector(n: usize, theta_deg: f64) -> CVector {
    let sin_theta = theta_deg.to_radians().sin();
    let scale = 1.0 / (n as f64).sqrt();
    CVector::from_fn(n, |m, _| {
        let phase = std::f64::consts::PI * m as f64 * sin_theta;
        C64::new(phase.cos() * scale, phase.sin() * scale)
    })
}

/// Patch-clutter covariance `σ²_c Σ_i v(θ_i)v(θ_i)† + σ²_n I`.
pub fn covar_patches(
    n: usize,
    angles_deg: &[f64],
    sigma_c2: f64,
    sigma_n2: f64,
) -> Result<HermitianMatrix, ScenarioError> {
    if angles_deg.is_empty() {
        return Err(invalid("angles_deg", "angle list must be nonempty"));
    }
    if sigma_c2 <= 0.0 || sigma_c2.is_nan() {
        return Err(invalid("clutter_powers_db", format!("linear power must be positive, got {sigma_c2}")));
    }
    if sigma_n2 <= 0.0 || sigma_n2.is_nan() {
        return Err(invalid("noise_power_db", format!("linear power must be positive, got {sigma_n2}")));
    }
    let mut clutter = CMatrix::zeros(n, n);
    let one = C64::new(1.0, 0.0);
    for &theta in angles_deg {
        let v = steering_vector(n, theta);
        clutter.gerc(C64::new(sigma_c2, 0.0), &v, &v, one);
    }
    Ok(HermitianMatrix::symmetrized(clutter).add_scaled_identity(sigma_n2))
}

/// Generate a labeled snapshot set: `K_l` columns per class, sampled from the
/// per-class covariances, laid out in contiguous blocks ordered class 1 first.
pub fn generate(config: &ScenarioConfig) -> Result<LabeledSnapshotSet, ScenarioError> {
    config.validate()?;
    let covs = config.class_covariances()?;
    let n = config.n;
    let k_total = config.total_bins();

    let mut data = CMatrix::zeros(n, k_total);
    let mut true_labels = Vec::with_capacity(k_total);
    let mut offset = 0;
    for (l, (&k_l, cov)) in config.class_sizes.iter().zip(&covs).enumerate() {
        let mut rng = substream(config.seed, "snapshots", l as u64);
        let block = sample_complex_gaussian(cov, k_l, &mut rng)?;
        data.view_mut((0, offset), (n, k_l)).copy_from(block.matrix());
        true_labels.extend(std::iter::repeat_n(l + 1, k_l));
        offset += k_l;
    }

    let priors: Vec<f64> = config
        .class_sizes
        .iter()
        .map(|&k_l| k_l as f64 / k_total as f64)
        .collect();
    let covariance = true_covariance_model(config, &covs)?;
    let true_params = MixtureParams { priors, covariance };

    Ok(LabeledSnapshotSet {
        snapshots: SnapshotSet::new(data)?,
        true_labels,
        true_params,
    })
}

/// Express the generative covariances in the mixture parameterization that
/// matches the scenario's model kind.
fn true_covariance_model(
    config: &ScenarioConfig,
    covs: &[HermitianMatrix],
) -> Result<CovarianceModel, ScenarioError> {
    let powers: Vec<f64> = config.clutter_powers_db.iter().map(|&db| db_to_linear(db)).collect();
    match config.model_kind {
        ModelKind::ScaledAR1 => {
            let common = covar_ar1(config.n, config.rho.unwrap())?;
            // Gauge-fix trace(M) = N; the AR(1) structure already has a unit
            // diagonal so this is exact.
            let tr = common.trace();
            let scale = tr / config.n as f64;
            Ok(CovarianceModel::ScaledCommon {
                common: common.scaled(1.0 / scale),
                powers: powers.iter().map(|&p| p * scale).collect(),
            })
        }
        ModelKind::PatchesPlusNoise => {
            let noise = db_to_linear(config.noise_power_db.unwrap());
            let angles = config.angles_deg.as_ref().unwrap();
            let ranks: Vec<usize> = angles.iter().map(|set| set.len().min(config.n)).collect();
            if ranks.iter().any(|&r| r >= config.n) {
                // Clutter spans the full space; the diagonally loaded form
                // cannot represent it, fall back to the general form.
                return Ok(CovarianceModel::General { class_covs: covs.to_vec() });
            }
            let clutter: Vec<HermitianMatrix> = powers
                .iter()
                .zip(angles)
                .map(|(&p, set)| {
                    let mut m = CMatrix::zeros(config.n, config.n);
                    for &theta in set {
                        let v = steering_vector(config.n, theta);
                        m.gerc(C64::new(p, 0.0), &v, &v, C64::new(1.0, 0.0));
                    }
                    HermitianMatrix::symmetrized(m)
                })
                .collect();
            Ok(CovarianceModel::LowRankNoise { noise_power: noise, clutter, ranks })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{hermitian_eig, inverse_and_logdet};
    use approx::assert_relative_eq;

    fn ar1_config() -> ScenarioConfig {
        ScenarioConfig {
            n: 16,
            class_sizes: vec![32, 32, 32],
            model_kind: ModelKind::ScaledAR1,
            rho: Some(0.9),
            clutter_powers_db: vec![20.0, 30.0, 40.0],
            noise_power_db: None,
            angles_deg: None,
            seed: 42,
        }
    }

    #[test]
    fn ar1_small_matrix_entries() {
        let m = covar_ar1(2, 0.9).unwrap();
        assert_relative_eq!(m.entry(0, 0).re, 1.0, max_relative = 1e-15);
        assert_relative_eq!(m.entry(0, 1).re, 0.9, max_relative = 1e-15);
        assert_relative_eq!(m.entry(1, 0).re, 0.9, max_relative = 1e-15);
        assert_relative_eq!(m.entry(1, 1).re, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn ar1_zero_correlation_is_identity() {
        let m = covar_ar1(3, 0.0).unwrap();
        assert!((m.matrix() - CMatrix::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn ar1_is_positive_definite() {
        let m = covar_ar1(16, 0.9).unwrap();
        let eig = hermitian_eig(&m).unwrap();
        assert!(*eig.eigenvalues.last().unwrap() > 0.0);
    }

    #[test]
    fn ar1_inverse_is_tridiagonal() {
        let m = covar_ar1(8, 0.9).unwrap();
        let (inv, _) = inverse_and_logdet(&m).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                if (i as i32 - j as i32).abs() > 1 {
                    assert!(
                        inv.entry(i, j).norm() < 1e-8,
                        "off-band entry ({i},{j}) = {:?}",
                        inv.entry(i, j)
                    );
                }
            }
        }
    }

    #[test]
    fn ar1_rejects_rho_out_of_range() {
        assert!(covar_ar1(4, 1.0).is_err());
        assert!(covar_ar1(4, -0.1).is_err());
    }

    #[test]
    fn steering_broadside_is_uniform() {
        let v = steering_vector(4, 0.0);
        for entry in v.iter() {
            assert_relative_eq!(entry.re, 0.5, max_relative = 1e-15);
            assert!(entry.im.abs() < 1e-15);
        }
    }

    #[test]
    fn steering_endfire_two_elements() {
        let v = steering_vector(2, 90.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(v[0].re, s, max_relative = 1e-12);
        assert_relative_eq!(v[1].re, -s, epsilon = 1e-12);
        assert!(v[1].im.abs() < 1e-12);
    }

    #[test]
    fn steering_has_unit_norm() {
        let v = steering_vector(16, 5.6);
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn patches_single_broadside_patch() {
        // v = (1/√2)(1,1): M = vv† + I = [[1.5, 0.5], [0.5, 1.5]].
        let m = covar_patches(2, &[0.0], 1.0, 1.0).unwrap();
        assert_relative_eq!(m.entry(0, 0).re, 1.5, max_relative = 1e-12);
        assert_relative_eq!(m.entry(0, 1).re, 0.5, max_relative = 1e-12);
        assert_relative_eq!(m.entry(1, 1).re, 1.5, max_relative = 1e-12);
    }

    #[test]
    fn patches_noise_only_limit() {
        let m = covar_patches(4, &[0.0, 3.0], 1e-12, 2.0).unwrap();
        let target = HermitianMatrix::identity(4).scaled(2.0);
        assert!((m.matrix() - target.matrix()).norm() < 1e-10);
    }

    #[test]
    fn patches_clutter_rank_matches_angle_count() {
        let angles = [-5.6, -2.8, 0.0, 2.8, 5.6];
        let m = covar_patches(16, &angles, 100.0, 1.0).unwrap();
        let eig = hermitian_eig(&m).unwrap();
        // Exactly |angles| eigenvalues rise above the noise floor; the rest
        // sit on it. The closely spaced angles make the trailing clutter
        // eigenvalues small, so the split is against the floor itself.
        let above: usize = eig.eigenvalues.iter().filter(|&&v| v > 1.0 + 1e-6).count();
        assert_eq!(above, 5, "eigenvalues {:?}", eig.eigenvalues);
        for &v in &eig.eigenvalues[5..] {
            assert_relative_eq!(v, 1.0, epsilon = 1e-9);
        }
        assert!(eig.eigenvalues.iter().all(|&v| v >= 1.0 - 1e-9));
    }

    #[test]
    fn patches_rejects_empty_angles() {
        assert!(covar_patches(4, &[], 1.0, 1.0).is_err());
    }

    #[test]
    fn generate_lays_out_contiguous_blocks() {
        let out = generate(&ar1_config()).unwrap();
        assert_eq!(out.snapshots.bins(), 96);
        assert_eq!(out.snapshots.channels(), 16);
        let expected: Vec<usize> = std::iter::repeat_n(1, 32)
            .chain(std::iter::repeat_n(2, 32))
            .chain(std::iter::repeat_n(3, 32))
            .collect();
        assert_eq!(out.true_labels, expected);
    }

    #[test]
    fn generate_minimal_two_class() {
        let config = ScenarioConfig {
            n: 2,
            class_sizes: vec![1, 1],
            model_kind: ModelKind::ScaledAR1,
            rho: Some(0.5),
            clutter_powers_db: vec![0.0, 10.0],
            noise_power_db: None,
            angles_deg: None,
            seed: 1,
        };
        let out = generate(&config).unwrap();
        assert_eq!(out.true_labels, vec![1, 2]);
        assert_eq!(out.snapshots.bins(), 2);
    }

    #[test]
    fn generate_is_deterministic() {
        let a = generate(&ar1_config()).unwrap();
        let b = generate(&ar1_config()).unwrap();
        assert_eq!(a.snapshots, b.snapshots);
        assert_eq!(a.true_labels, b.true_labels);
    }

    #[test]
    fn generate_empirical_class_covariance() {
        let mut config = ScenarioConfig {
            n: 4,
            class_sizes: vec![1, 1],
            model_kind: ModelKind::ScaledAR1,
            rho: Some(0.9),
            clutter_powers_db: vec![0.0, 10.0],
            noise_power_db: None,
            angles_deg: None,
            seed: 0,
        };
        let covs = config.class_covariances().unwrap();
        let trials = 10_000;
        let mut acc = CMatrix::zeros(4, 4);
        for t in 0..trials {
            config.seed = t;
            let out = generate(&config).unwrap();
            let z = out.snapshots.column(0);
            acc.gerc(C64::new(1.0, 0.0), &z, &z, C64::new(1.0, 0.0));
        }
        let emp = acc / C64::new(trials as f64, 0.0);
        let rel = (&emp - covs[0].matrix()).norm() / covs[0].frobenius_norm();
        assert!(rel < 0.05, "empirical covariance error {rel}");
    }

    #[test]
    fn generate_patch_truth_uses_low_rank_form() {
        let config = ScenarioConfig {
            n: 16,
            class_sizes: vec![4, 4, 4],
            model_kind: ModelKind::PatchesPlusNoise,
            rho: None,
            clutter_powers_db: vec![20.0, 30.0, 40.0],
            noise_power_db: Some(0.0),
            angles_deg: Some(vec![
                vec![-5.6, -2.8, 0.0, 2.8, 5.6],
                vec![-5.6, -2.8, 0.0, 2.8, 5.6],
                vec![-5.6, -2.8, 0.0, 2.8, 5.6],
            ]),
            seed: 3,
        };
        let out = generate(&config).unwrap();
        match &out.true_params.covariance {
            CovarianceModel::LowRankNoise { noise_power, ranks, .. } => {
                assert_relative_eq!(*noise_power, 1.0, max_relative = 1e-12);
                assert_eq!(ranks, &vec![5, 5, 5]);
            }
            other => panic!("expected low-rank truth, got {other:?}"),
        }
    }

    #[test]
    fn config_validation_names_offending_field() {
        let mut config = ar1_config();
        config.clutter_powers_db.pop();
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("clutter_powers_db"), "{err}");
    }

    #[test]
    fn config_json_round_trip_is_identical() {
        let config = ar1_config();
        let json = serde_json::to_value(&config).unwrap();
        let back: ScenarioConfig = serde_json::from_value(json.clone()).unwrap();
        assert_eq!(config, back);
        assert_eq!(json, serde_json::to_value(&back).unwrap());
        // Optional fields of the other model kind stay out of the document.
        assert!(json.get("noise_power_db").is_none());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let text = r#"{"n": 4, "class_sizes": [2, 2], "model_kind": "ScaledAR1",
                       "rho": 0.5, "clutter_powers_db": [0.0, 10.0], "seed": 1,
                       "extra_knob": true}"#;
        let err = serde_json::from_str::<ScenarioConfig>(text).unwrap_err();
        assert!(err.to_string().contains("extra_knob"), "{err}");
    }
}
