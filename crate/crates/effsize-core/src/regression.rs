//! Ordinary least squares by Householder QR.
//!
//! The fit never forms the normal equations; coefficients come from the
//! orthogonal factorization and standard errors from `sigma^2 R^-1 R^-T`.

use crate::dataio::Design;
use crate::error::{Error, Result};
use crate::linalg::{dot, qr_decompose};
use crate::special::t_quantile;

/// A fitted linear model. `df_residual = n - p - 1` where `p` counts the
/// predictors excluding the intercept.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub rss: f64,
    pub tss: f64,
    pub r2: f64,
    pub adj_r2_ezekiel: f64,
    pub df_residual: usize,
    pub std_errors: Vec<f64>,
    pub sigma2_hat: f64,
    pub condition_estimate: f64,
    pub n: usize,
    pub p: usize,
}

impl LinearFit {
    /// Prediction for one raw predictor row (without the intercept column).
    pub fn predict_row(&self, predictors: &[f64]) -> f64 {
        debug_assert_eq!(predictors.len() + 1, self.coefficients.len());
        self.coefficients[0] + dot(&self.coefficients[1..], predictors)
    }
}

/// Fits `y ~ design` by least squares. The design must contain the
/// intercept as column 0 (as produced by `build_design`).
pub fn fit_ols(design: &Design, y: &[f64]) -> Result<LinearFit> {
    let x = &design.matrix;
    let n = x.n_rows();
    let cols = x.n_cols();
    if y.len() != n {
        return Err(Error::InvalidSpec(format!(
            "response has {} rows, design has {n}",
            y.len()
        )));
    }
    if cols == 0 {
        return Err(Error::InvalidSpec("design has no columns".into()));
    }
    if n < cols + 2 {
        return Err(Error::TooFewRows { need: cols + 2, got: n });
    }

    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|&v| (v - mean) * (v - mean)).sum();
    if tss == 0.0 {
        return Err(Error::ConstantResponse);
    }

    let qr = qr_decompose(x);
    let deficient = qr.deficient_columns();
    if !deficient.is_empty() {
        return Err(Error::RankDeficient {
            columns: deficient.iter().map(|&k| design.names[k].clone()).collect(),
        });
    }
    let coefficients = qr.solve(y)?;

    let fitted = x.mat_vec(&coefficients);
    let rss: f64 = y
        .iter()
        .zip(&fitted)
        .map(|(&yi, &fi)| (yi - fi) * (yi - fi))
        .sum();

    let r2 = (1.0 - rss / tss).clamp(0.0, 1.0);
    let p = cols - 1;
    let df_residual = n - cols;
    let adj_r2_ezekiel = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / df_residual as f64;
    let sigma2_hat = rss / df_residual as f64;

    let xtx_inv = qr.xtx_inverse();
    let std_errors = (0..cols)
        .map(|k| (sigma2_hat * xtx_inv.get(k, k)).max(0.0).sqrt())
        .collect();

    Ok(LinearFit {
        names: design.names.clone(),
        coefficients,
        rss,
        tss,
        r2,
        adj_r2_ezekiel,
        df_residual,
        std_errors,
        sigma2_hat,
        condition_estimate: qr.condition_estimate(),
        n,
        p,
    })
}

/// One coefficient's interval estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientInterval {
    pub name: String,
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
}

/// Two-sided t intervals `beta_i +/- t*(df, (1+level)/2) * se_i`.
pub fn coefficient_intervals(fit: &LinearFit, level: f64) -> Result<Vec<CoefficientInterval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "interval level must be in (0, 1), got {level}"
        )));
    }
    let t_star = t_quantile(0.5 * (1.0 + level), fit.df_residual as f64)?;
    Ok(fit
        .names
        .iter()
        .zip(fit.coefficients.iter().zip(&fit.std_errors))
        .map(|(name, (&beta, &se))| CoefficientInterval {
            name: name.clone(),
            estimate: beta,
            low: beta - t_star * se,
            high: beta + t_star * se,
        })
        .collect())
}
