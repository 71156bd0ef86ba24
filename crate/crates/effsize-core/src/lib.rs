//! Global and local Cohen's f^2 effect sizes for regression-type models.
//!
//! The toolkit answers the local question — how much unique explanatory
//! power a focal predictor block adds beyond the rest of the model — via
//!
//! ```text
//! f^2   = R2_AB / (1 - R2_AB)
//! f_B^2 = (R2_AB - R2_A) / (1 - R2_AB)
//! ```
//!
//! with the 0.02 / 0.15 / 0.35 reference points for small, medium, and
//! large effects. Around that core sit a stable QR-based OLS fitter with
//! exact p-values and interval estimates, shrinkage estimators for R^2, a
//! seeded bootstrap and Monte Carlo harness, a random-intercept multilevel
//! extension, and a permutation-based estimator for black-box regressors.

pub mod blackbox;
pub mod dataio;
pub mod effectsize;
pub mod error;
pub mod linalg;
pub mod multilevel;
pub mod regression;
pub mod report;
pub mod resampling;
pub mod rng;
pub mod special;

pub use dataio::{build_design, load_csv, Dataset, GroupedDataset, LoadOptions, ModelSpec};
pub use effectsize::{
    adjusted_r2, analyze, classify, global_f2, local_f2, local_f2_external, BenchmarkConfig,
    EffectLabel, EffectSizeReport, ModelComparison, ShrinkageMethod,
};
pub use error::{Error, Result};
pub use regression::{coefficient_intervals, fit_ols, LinearFit};
pub use resampling::{bootstrap_f2_ci, monte_carlo_stability, BootstrapConfig, MonteCarloConfig};
