//! Classification of complex radar range-bin snapshots into statistically
//! homogeneous clutter classes.
//!
//! The model is a latent-class complex Gaussian mixture fitted by EM under
//! three covariance structures (unconstrained Hermitian, power-scaled common
//! structure, and low-rank clutter plus white noise), with optional
//! information-criterion selection of the clutter ranks. The crate also ships
//! the synthetic scenario generators (AR(1) and angular-patch covariances),
//! a seeded Monte Carlo benchmark harness, and the file formats used by the
//! `clutterclass` command-line tool.
//!
//! ```
//! use clutterclass::em::{run_em, CovarianceForm, FitConfig};
//! use clutterclass::init::{InitKind, InitRecipe};
//! use clutterclass::scenario::{generate, ModelKind, ScenarioConfig};
//!
//! let scenario = ScenarioConfig {
//!     n: 8,
//!     class_sizes: vec![16, 16],
//!     model_kind: ModelKind::ScaledAR1,
//!     rho: Some(0.9),
//!     clutter_powers_db: vec![10.0, 30.0],
//!     noise_power_db: None,
//!     angles_deg: None,
//!     seed: 7,
//! };
//! let labeled = generate(&scenario).unwrap();
//! let config = FitConfig::new(CovarianceForm::ScaledCommon, 2);
//! let recipe = InitRecipe { kind: InitKind::PaperDefault, seed: 7 };
//! let init = recipe.resolve(&labeled.snapshots, &config).unwrap();
//! let fit = run_em(&labeled.snapshots, &config, &init).unwrap();
//! assert_eq!(fit.labels.len(), 32);
//! ```

pub mod cli;
pub mod em;
pub mod eval;
pub mod init;
pub mod io;
pub mod numerics;
pub mod rng;
pub mod scenario;

pub use em::{
    classify, e_step, log_likelihood, run_em, update_priors, CovarianceForm, CovarianceModel,
    EmError, FitConfig, FitResult, MixtureParams, MosRule, Responsibilities,
};
pub use eval::{classification_error, monte_carlo, rmsce, BenchmarkReport, Matching, TrialOutcome};
pub use numerics::{
    hermitian_eig, inverse_and_logdet, quad_form, sample_complex_gaussian, EigenDecomposition,
    HermitianMatrix, NumericsError, SnapshotSet,
};
pub use scenario::{covar_ar1, covar_patches, generate, steering_vector, LabeledSnapshotSet, ModelKind, ScenarioConfig};
