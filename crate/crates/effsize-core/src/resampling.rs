//! Case bootstrap for f_B^2 intervals and the Monte Carlo harness that
//! checks sampling-distribution stability of the R^2-based estimators.
//!
//! Every replicate draws its randomness from an independent stream derived
//! from `(seed, replicate index)`, so results do not depend on scheduling.

use rand::{Rng, RngExt};

use crate::dataio::{Dataset, ModelSpec};
use crate::effectsize::{adjusted_r2, compare, ShrinkageMethod};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, solve_spd, Matrix};
use crate::rng;

/// Case-bootstrap settings. `replicates >= 200`, `0 < level < 1`.
#[derive(Debug, Clone, Copy)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn new(seed: u64) -> Self {
        BootstrapConfig {
            replicates: 2000,
            level: 0.95,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replicates < 200 {
            return Err(Error::InvalidConfig(format!(
                "bootstrap needs at least 200 replicates, got {}",
                self.replicates
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "bootstrap level must be in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }
}

/// Percentile bootstrap interval for the local f^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapInterval {
    pub low: f64,
    pub high: f64,
    /// Point estimate on the original rows.
    pub point: f64,
    pub level: f64,
    pub replicates_used: usize,
    pub skipped: usize,
}

fn is_degenerate(err: &Error) -> bool {
    matches!(
        err,
        Error::RankDeficient { .. }
            | Error::ConstantColumn(_)
            | Error::ConstantResponse
            | Error::DenominatorGuard { .. }
            | Error::NonNested { .. }
    )
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = rank - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// Percentile interval for f_B^2 from resampling rows jointly (case
/// bootstrap), which preserves the joint predictor distribution. Replicates
/// that produce a degenerate design are skipped; more than 1% skipped is an
/// error.
pub fn bootstrap_f2_ci(
    dataset: &Dataset,
    spec: &ModelSpec,
    config: &BootstrapConfig,
) -> Result<BootstrapInterval> {
    config.validate()?;
    let n = dataset.n_rows();
    if n < 30 {
        return Err(Error::TooFewRows { need: 30, got: n });
    }
    let point = compare(dataset, spec)?.local_f2();

    let mut values = Vec::with_capacity(config.replicates);
    let mut skipped = 0usize;
    let mut indices = vec![0usize; n];
    for rep in 0..config.replicates {
        let mut stream = rng::stream(config.seed, rep as u64);
        for slot in indices.iter_mut() {
            *slot = stream.random_range(0..n);
        }
        let resampled = dataset.select_rows(&indices);
        match compare(&resampled, spec) {
            Ok(cmp) => values.push(cmp.local_f2()),
            Err(err) if is_degenerate(&err) => skipped += 1,
            Err(err) => return Err(err),
        }
    }

    if skipped * 100 > config.replicates {
        return Err(Error::DegenerateReplicates {
            skipped,
            total: config.replicates,
        });
    }

    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = 1.0 - config.level;
    Ok(BootstrapInterval {
        low: percentile(&values, 0.5 * alpha),
        high: percentile(&values, 1.0 - 0.5 * alpha),
        point,
        level: config.level,
        replicates_used: values.len(),
        skipped,
    })
}

/// Data-generating population for the Monte Carlo harness: Gaussian
/// predictors (identity covariance unless one is supplied) plus Gaussian
/// noise, either from explicit coefficients or from target population R^2
/// values.
#[derive(Debug, Clone)]
pub enum PopulationSpec {
    Coefficients {
        beta_covariates: Vec<f64>,
        beta_focal: Vec<f64>,
        noise_variance: f64,
        /// Optional full predictor covariance, factorized internally.
        covariance: Option<Matrix>,
    },
    /// Orthonormal-predictor construction hitting exact population R^2
    /// values for the reduced and full models.
    TargetRho2 {
        rho2_a: f64,
        rho2_ab: f64,
        n_covariates: usize,
        n_focal: usize,
    },
}

/// A population with its closed-form R^2 values resolved.
#[derive(Debug, Clone)]
pub struct Population {
    beta: Vec<f64>,
    n_covariates: usize,
    n_focal: usize,
    noise_sd: f64,
    chol: Option<Matrix>,
    pub rho2_a: f64,
    pub rho2_ab: f64,
}

impl Population {
    /// Population local f^2 of the focal block.
    pub fn f2_local(&self) -> f64 {
        (self.rho2_ab - self.rho2_a) / (1.0 - self.rho2_ab)
    }

    pub fn p_ab(&self) -> usize {
        self.beta.len()
    }

    /// Model spec matching the column names `draw` produces.
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec::new(
            "y",
            (1..=self.n_focal).map(|i| format!("b{i}")).collect(),
            (1..=self.n_covariates).map(|i| format!("a{i}")).collect(),
        )
        .expect("population spec is valid by construction")
    }

    /// Draws one dataset of `n` rows.
    pub fn draw<R: Rng>(&self, n: usize, stream: &mut R) -> Dataset {
        let p = self.beta.len();
        let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n); p];
        let mut y = Vec::with_capacity(n);
        let mut z = vec![0.0; p];
        for _ in 0..n {
            rng::fill_standard_normal(stream, &mut z);
            let row: Vec<f64> = match &self.chol {
                None => z.clone(),
                Some(l) => (0..p)
                    .map(|i| (0..=i).map(|k| l.get(i, k) * z[k]).sum())
                    .collect(),
            };
            let mut signal = 0.0;
            for (j, &x) in row.iter().enumerate() {
                columns[j].push(x);
                signal += self.beta[j] * x;
            }
            y.push(signal + self.noise_sd * rng::standard_normal(stream));
        }

        let spec = self.model_spec();
        let mut named: Vec<(String, Vec<f64>)> = Vec::with_capacity(p + 1);
        named.push(("y".to_string(), y));
        for (name, col) in spec
            .covariates
            .iter()
            .chain(&spec.focal)
            .zip(columns.into_iter())
        {
            named.push((name.clone(), col));
        }
        Dataset::new(named).expect("generated data is finite by construction")
    }
}

impl PopulationSpec {
    pub fn resolve(&self) -> Result<Population> {
        match self {
            PopulationSpec::Coefficients {
                beta_covariates,
                beta_focal,
                noise_variance,
                covariance,
            } => {
                if !(*noise_variance > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "noise variance must be positive, got {noise_variance}"
                    )));
                }
                if beta_focal.is_empty() {
                    return Err(Error::InvalidConfig(
                        "population needs at least one focal coefficient".into(),
                    ));
                }
                let k = beta_covariates.len();
                let q = beta_focal.len();
                let p = k + q;
                let beta: Vec<f64> = beta_covariates
                    .iter()
                    .chain(beta_focal)
                    .copied()
                    .collect();

                let (explained_ab, explained_a, chol) = match covariance {
                    None => {
                        let s_ab: f64 = beta.iter().map(|b| b * b).sum();
                        let s_a: f64 = beta_covariates.iter().map(|b| b * b).sum();
                        (s_ab, s_a, None)
                    }
                    Some(sigma) => {
                        if sigma.n_rows() != p || sigma.n_cols() != p {
                            return Err(Error::InvalidConfig(format!(
                                "covariance must be {p}x{p}"
                            )));
                        }
                        let l = cholesky(sigma).ok_or_else(|| {
                            Error::InvalidConfig(
                                "predictor covariance is not positive definite".into(),
                            )
                        })?;
                        // Explained variance of the full model: beta' Sigma beta.
                        let sb = sigma.mat_vec(&beta);
                        let s_ab: f64 = beta.iter().zip(&sb).map(|(a, b)| a * b).sum();
                        // Best linear predictor from A alone:
                        // c_A' Sigma_AA^-1 c_A with c = Sigma beta.
                        let s_a = if k == 0 {
                            0.0
                        } else {
                            let mut sigma_aa = Matrix::zeros(k, k);
                            for i in 0..k {
                                for j in 0..k {
                                    sigma_aa.set(i, j, sigma.get(i, j));
                                }
                            }
                            let c_a = &sb[..k];
                            let w = solve_spd(&sigma_aa, c_a).ok_or_else(|| {
                                Error::InvalidConfig(
                                    "covariate block of the covariance is singular".into(),
                                )
                            })?;
                            c_a.iter().zip(&w).map(|(a, b)| a * b).sum()
                        };
                        (s_ab, s_a, Some(l))
                    }
                };

                let var_y = explained_ab + noise_variance;
                Ok(Population {
                    beta,
                    n_covariates: k,
                    n_focal: q,
                    noise_sd: noise_variance.sqrt(),
                    chol,
                    rho2_a: explained_a / var_y,
                    rho2_ab: explained_ab / var_y,
                })
            }
            PopulationSpec::TargetRho2 {
                rho2_a,
                rho2_ab,
                n_covariates,
                n_focal,
            } => {
                if !(0.0 <= *rho2_a && rho2_a <= rho2_ab && *rho2_ab < 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "need 0 <= rho2_a <= rho2_ab < 1, got {rho2_a}, {rho2_ab}"
                    )));
                }
                if *n_focal == 0 {
                    return Err(Error::InvalidConfig(
                        "population needs at least one focal column".into(),
                    ));
                }
                if *n_covariates == 0 && *rho2_a > 0.0 {
                    return Err(Error::InvalidConfig(
                        "rho2_a > 0 requires at least one covariate column".into(),
                    ));
                }
                // Unit total variance: coefficient mass rho2_a on A,
                // rho2_ab - rho2_a on B, noise 1 - rho2_ab.
                let beta_covariates =
                    vec![(rho2_a / (*n_covariates).max(1) as f64).sqrt(); *n_covariates];
                let beta_focal =
                    vec![((rho2_ab - rho2_a) / *n_focal as f64).sqrt(); *n_focal];
                PopulationSpec::Coefficients {
                    beta_covariates,
                    beta_focal,
                    noise_variance: 1.0 - rho2_ab,
                    covariance: None,
                }
                .resolve()
            }
        }
    }
}

/// Monte Carlo study settings.
#[derive(Debug, Clone)]
pub struct MonteCarloConfig {
    pub population: PopulationSpec,
    pub n_grid: Vec<usize>,
    pub reps_per_n: usize,
    pub seed: u64,
}

pub const ESTIMATOR_NAMES: [&str; 4] = ["r2", "adj_r2_ezekiel", "adj_r2_olkin_pratt", "f2_local"];

/// Sampling-distribution summary for one estimator at one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub estimator: &'static str,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub bias: f64,
    pub population_value: f64,
}

/// One row per estimator x sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilitySummary {
    pub rows: Vec<StabilityRow>,
}

impl StabilitySummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,n,mean,sd,bias,population\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.estimator, r.n, r.mean, r.sd, r.bias, r.population_value
            ));
        }
        out
    }

    pub fn row(&self, estimator: &str, n: usize) -> Option<&StabilityRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.n == n)
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    // Compensated summation keeps aggregation order-insensitive.
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    let mean = sum / n;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Draws `reps_per_n` datasets at every grid size, computes the estimator
/// set on each, and aggregates mean / sd / bias against the closed-form
/// population values.
pub fn monte_carlo_stability(config: &MonteCarloConfig) -> Result<StabilitySummary> {
    if config.n_grid.is_empty() {
        return Err(Error::InvalidConfig("n_grid must not be empty".into()));
    }
    if !config.n_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidConfig(
            "n_grid must be strictly increasing".into(),
        ));
    }
    if config.reps_per_n < 100 {
        return Err(Error::InvalidConfig(format!(
            "reps_per_n must be at least 100, got {}",
            config.reps_per_n
        )));
    }
    let population = config.population.resolve()?;
    let spec = population.model_spec();
    let p_ab = population.p_ab();
    let smallest = config.n_grid[0];
    if smallest < p_ab + 3 {
        return Err(Error::TooFewRows {
            need: p_ab + 3,
            got: smallest,
        });
    }

    // values[estimator][n_index] = per-replicate estimates
    let mut values: Vec<Vec<Vec<f64>>> =
        vec![vec![Vec::with_capacity(config.reps_per_n); config.n_grid.len()]; 4];

    for (ni, &n) in config.n_grid.iter().enumerate() {
        for rep in 0..config.reps_per_n {
            let stream_id = (ni * config.reps_per_n + rep) as u64;
            let mut stream = rng::stream(config.seed, stream_id);
            let dataset = population.draw(n, &mut stream);
            let cmp = compare(&dataset, &spec)?;
            values[0][ni].push(cmp.r2_ab);
            values[1][ni].push(adjusted_r2(cmp.r2_ab, n, p_ab, ShrinkageMethod::Ezekiel)?);
            values[2][ni].push(adjusted_r2(cmp.r2_ab, n, p_ab, ShrinkageMethod::OlkinPratt)?);
            values[3][ni].push(cmp.local_f2());
        }
    }

    let mut rows = Vec::with_capacity(4 * config.n_grid.len());
    for (e, name) in ESTIMATOR_NAMES.iter().enumerate() {
        let target = if *name == "f2_local" {
            population.f2_local()
        } else {
            population.rho2_ab
        };
        for (ni, &n) in config.n_grid.iter().enumerate() {
            let (mean, sd) = mean_sd(&values[e][ni]);
            rows.push(StabilityRow {
                estimator: name,
                n,
                mean,
                sd,
                bias: mean - target,
                population_value: target,
            });
        }
    }
    Ok(StabilitySummary { rows })
}
