//! Random-intercept linear mixed model with profiled REML, pseudo-R^2, and
//! the multilevel local f^2 built from it.
//!
//! The model is `y = X beta + u[group] + e` with `u ~ N(0, sigma2_u)` and
//! `e ~ N(0, sigma2_e)`. Everything profiles down to the variance ratio
//! `theta = sigma2_u / sigma2_e`: given theta the marginal covariance is
//! `sigma2_e (I + theta Z Z')`, block-diagonal per group, whose inverse
//! square root is closed form, so each criterion evaluation is one whitened
//! least-squares solve.

use crate::dataio::{build_design, Design, GroupedDataset, ModelSpec, INTERCEPT_NAME};
use crate::effectsize::{
    classify, global_f2, BenchmarkConfig, EffectLabel, EffectSizeReport, ReportVariant,
    DENOMINATOR_GUARD,
};
use crate::error::{Error, Result};
use crate::linalg::{qr_decompose, solve_spd, Matrix};
use crate::regression::CoefficientInterval;
use crate::special::{f_sf, t_quantile};

const LOG_THETA_LO: f64 = -12.0;
const LOG_THETA_HI: f64 = 12.0;
const GOLDEN_TOL: f64 = 1e-8;
const MAX_ITER: usize = 300;

/// Which explained-variance decomposition feeds the multilevel f^2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PseudoR2Def {
    /// 1 - (sigma2_u + sigma2_e)_model / (sigma2_u + sigma2_e)_null
    TotalVariance,
    /// 1 - sigma2_e_model / sigma2_e_null
    ResidualVariance,
}

impl PseudoR2Def {
    pub fn tag(&self) -> &'static str {
        match self {
            PseudoR2Def::TotalVariance => "total-variance",
            PseudoR2Def::ResidualVariance => "residual-variance",
        }
    }
}

/// A fitted random-intercept model.
#[derive(Debug, Clone)]
pub struct LmmFit {
    pub names: Vec<String>,
    pub fixed_coefficients: Vec<f64>,
    pub sigma2_u: f64,
    pub sigma2_e: f64,
    /// Profiled REML log-likelihood (includes the 2*pi terms, no further
    /// additive constants).
    pub reml_loglik: f64,
    pub n_groups: usize,
    pub converged: bool,
    pub theta: f64,
    pub std_errors: Vec<f64>,
    pub n: usize,
    pub p: usize,
}

struct FittedDesign {
    fit: LmmFit,
    cov_fixed: Matrix,
}

struct CriterionEval {
    loglik: f64,
    beta: Vec<f64>,
    sigma2_e: f64,
    cov_unit: Matrix, // (X* ' X*)^-1; multiply by sigma2_e for cov(beta)
}

/// Whitens a column in place: within each group, `v <- v + (s_g - 1) *
/// mean_g(v)` where `s_g = (1 + theta m_g)^{-1/2}`.
fn whiten_column(
    values: &mut [f64],
    groups: &[usize],
    group_rows: &[Vec<usize>],
    shrink: &[f64],
) {
    debug_assert_eq!(values.len(), groups.len());
    for (g, rows) in group_rows.iter().enumerate() {
        let mean: f64 = rows.iter().map(|&i| values[i]).sum::<f64>() / rows.len() as f64;
        let adjust = (shrink[g] - 1.0) * mean;
        for &i in rows {
            values[i] += adjust;
        }
    }
}

fn evaluate_theta(
    theta: f64,
    y: &[f64],
    design: &Design,
    groups: &[usize],
    group_rows: &[Vec<usize>],
) -> Result<CriterionEval> {
    let n = y.len();
    let p_cols = design.matrix.n_cols();
    let sizes: Vec<f64> = group_rows.iter().map(|r| r.len() as f64).collect();
    let shrink: Vec<f64> = sizes.iter().map(|&m| 1.0 / (1.0 + theta * m).sqrt()).collect();
    let log_det_w: f64 = sizes.iter().map(|&m| (1.0 + theta * m).ln()).sum();

    let mut x_star = design.matrix.clone();
    for j in 0..p_cols {
        let mut col = x_star.column(j);
        whiten_column(&mut col, groups, group_rows, &shrink);
        x_star.set_column(j, &col);
    }
    let mut y_star = y.to_vec();
    whiten_column(&mut y_star, groups, group_rows, &shrink);

    let qr = qr_decompose(&x_star);
    let deficient = qr.deficient_columns();
    if !deficient.is_empty() {
        return Err(Error::RankDeficient {
            columns: deficient.iter().map(|&k| design.names[k].clone()).collect(),
        });
    }
    let beta = qr.solve(&y_star)?;
    let fitted = x_star.mat_vec(&beta);
    let rss: f64 = y_star
        .iter()
        .zip(&fitted)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    let df = (n - p_cols) as f64;
    let sigma2_e = rss / df;
    if !(sigma2_e > 0.0) {
        return Err(Error::Domain(
            "residual variance collapsed to zero; the mixed model is degenerate".into(),
        ));
    }
    let log_det_xtwx: f64 = qr.r_diag().iter().map(|d| d.abs().ln()).sum::<f64>() * 2.0;
    let loglik = -0.5
        * (df * ((2.0 * std::f64::consts::PI).ln() + sigma2_e.ln() + 1.0)
            + log_det_w
            + log_det_xtwx);
    Ok(CriterionEval {
        loglik,
        beta,
        sigma2_e,
        cov_unit: qr.xtx_inverse(),
    })
}

fn fit_design(y: &[f64], design: &Design, grouped: &GroupedDataset) -> Result<FittedDesign> {
    fit_design_bracketed(y, design, grouped, LOG_THETA_LO, LOG_THETA_HI)
}

fn fit_design_bracketed(
    y: &[f64],
    design: &Design,
    grouped: &GroupedDataset,
    log_theta_lo: f64,
    log_theta_hi: f64,
) -> Result<FittedDesign> {
    let n = y.len();
    let p_cols = design.matrix.n_cols();
    let n_groups = grouped.n_groups();
    if n_groups < 2 {
        return Err(Error::InvalidSpec("need at least 2 groups".into()));
    }
    // Three rows per parameter (fixed effects plus the two variances).
    let need = 3 * (p_cols + 2);
    if n < need {
        return Err(Error::TooFewRows { need, got: n });
    }

    let mut group_rows: Vec<Vec<usize>> = vec![Vec::new(); n_groups];
    for (i, &g) in grouped.group_index().iter().enumerate() {
        group_rows[g].push(i);
    }

    let eval = |log_theta: f64| -> Result<f64> {
        Ok(evaluate_theta(log_theta.exp(), y, design, grouped.group_index(), &group_rows)?.loglik)
    };

    // Golden-section maximization of the profiled criterion on log theta.
    let phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut lo = log_theta_lo;
    let mut hi = log_theta_hi;
    let mut m1 = hi - phi * (hi - lo);
    let mut m2 = lo + phi * (hi - lo);
    let mut f1 = eval(m1)?;
    let mut f2 = eval(m2)?;
    let mut iterations = 0;
    while hi - lo > GOLDEN_TOL {
        iterations += 1;
        if iterations > MAX_ITER {
            return Err(Error::NonConvergence(MAX_ITER));
        }
        if f1 < f2 {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + phi * (hi - lo);
            f2 = eval(m2)?;
        } else {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - phi * (hi - lo);
            f1 = eval(m1)?;
        }
    }
    let log_theta = 0.5 * (lo + hi);
    let mut theta = log_theta.exp();
    let mut best = evaluate_theta(theta, y, design, grouped.group_index(), &group_rows)?;

    // The boundary sigma2_u = 0 is a valid optimum the log grid cannot
    // reach; take it when it scores at least as well.
    let at_zero = evaluate_theta(0.0, y, design, grouped.group_index(), &group_rows)?;
    if at_zero.loglik >= best.loglik {
        theta = 0.0;
        best = at_zero;
    }

    let hit_bound = theta == 0.0
        || (log_theta - log_theta_lo).abs() < 1e-6
        || (log_theta_hi - log_theta).abs() < 1e-6;

    let sigma2_e = best.sigma2_e;
    let std_errors = (0..p_cols)
        .map(|k| (sigma2_e * best.cov_unit.get(k, k)).max(0.0).sqrt())
        .collect();
    let mut cov_fixed = Matrix::zeros(p_cols, p_cols);
    for i in 0..p_cols {
        for j in 0..p_cols {
            cov_fixed.set(i, j, sigma2_e * best.cov_unit.get(i, j));
        }
    }

    Ok(FittedDesign {
        fit: LmmFit {
            names: design.names.clone(),
            fixed_coefficients: best.beta,
            sigma2_u: theta * sigma2_e,
            sigma2_e,
            reml_loglik: best.loglik,
            n_groups,
            converged: !hit_bound,
            theta,
            std_errors,
            n,
            p: p_cols - 1,
        },
        cov_fixed,
    })
}

/// Fits the full model (intercept + covariates + focal block) with a random
/// intercept per group.
pub fn fit_random_intercept(data: &GroupedDataset, spec: &ModelSpec) -> Result<LmmFit> {
    let pair = build_design(data.base(), spec)?;
    Ok(fit_design(&pair.response, &pair.full, data)?.fit)
}

/// Explained-variance analogue for mixed models, against the
/// intercept-plus-random-intercept null.
pub fn pseudo_r2(model: &LmmFit, null: &LmmFit, def: PseudoR2Def) -> f64 {
    match def {
        PseudoR2Def::TotalVariance => {
            1.0 - (model.sigma2_u + model.sigma2_e) / (null.sigma2_u + null.sigma2_e)
        }
        PseudoR2Def::ResidualVariance => 1.0 - model.sigma2_e / null.sigma2_e,
    }
}

fn intercept_design(n: usize) -> Design {
    Design {
        names: vec![INTERCEPT_NAME.to_string()],
        matrix: Matrix::from_columns(&[vec![1.0; n]]),
    }
}

/// Multilevel local f^2: pseudo-R^2 for the reduced and full models against
/// the random-intercept null, combined by the local f^2 equation, plus a
/// Wald F test of the focal block and interval estimates for the fixed
/// effects. Pseudo-R^2 may decrease when predictors are added; that case is
/// reported with a warning instead of an error, and the resulting negative
/// f^2 is not interpretable as incremental explained variance.
pub fn lmm_local_f2(
    data: &GroupedDataset,
    spec: &ModelSpec,
    definition: PseudoR2Def,
) -> Result<EffectSizeReport> {
    let pair = build_design(data.base(), spec)?;
    let y = &pair.response;
    let n = y.len();

    let null = fit_design(y, &intercept_design(n), data)?;
    let reduced = fit_design(y, &pair.reduced, data)?;
    let full = fit_design(y, &pair.full, data)?;

    let r2_a = pseudo_r2(&reduced.fit, &null.fit, definition);
    let r2_ab = pseudo_r2(&full.fit, &null.fit, definition);

    if 1.0 - r2_ab < DENOMINATOR_GUARD {
        return Err(Error::DenominatorGuard {
            r2: r2_ab,
            guard: DENOMINATOR_GUARD,
        });
    }
    let f2_local = (r2_ab - r2_a) / (1.0 - r2_ab);

    let mut warnings = Vec::new();
    if f2_local < 0.0 {
        warnings.push(
            "pseudo-R^2 decreased when adding the focal block; the negative f^2 is not interpretable as incremental variance"
                .to_string(),
        );
    }
    if !full.fit.converged {
        warnings.push("variance-ratio search ended at a bound; sigma2_u may be degenerate".into());
    }

    // Wald F for the focal block in the full model.
    let q = spec.focal.len();
    let p_cols = pair.full.matrix.n_cols();
    let focal_start = p_cols - q;
    let mut cov_bb = Matrix::zeros(q, q);
    for i in 0..q {
        for j in 0..q {
            cov_bb.set(i, j, full.cov_fixed.get(focal_start + i, focal_start + j));
        }
    }
    let beta_b: Vec<f64> = full.fit.fixed_coefficients[focal_start..].to_vec();
    let df2 = n - p_cols;
    let (f_stat, p_exact) = match solve_spd(&cov_bb, &beta_b) {
        Some(w) => {
            let f = beta_b.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / q as f64;
            let f = f.max(0.0);
            (Some(f), Some(f_sf(f, q as f64, df2 as f64)?))
        }
        None => {
            warnings.push("focal-block covariance was singular; Wald test unavailable".into());
            (None, None)
        }
    };

    let t_star = t_quantile(0.5 * (1.0 + 0.95), df2 as f64)?;
    let intervals = full
        .fit
        .names
        .iter()
        .zip(full.fit.fixed_coefficients.iter().zip(&full.fit.std_errors))
        .map(|(name, (&beta, &se))| CoefficientInterval {
            name: name.clone(),
            estimate: beta,
            low: beta - t_star * se,
            high: beta + t_star * se,
        })
        .collect();

    let benchmarks = BenchmarkConfig::default();
    let label = if f2_local < 0.0 {
        EffectLabel::BelowSmall
    } else {
        classify(f2_local, &benchmarks)
    };
    let f2_global = if (0.0..1.0).contains(&r2_ab) {
        global_f2(r2_ab)?
    } else {
        f64::NAN
    };

    Ok(EffectSizeReport {
        variant: ReportVariant::Multilevel,
        r2_a,
        r2_ab,
        adj_r2_ezekiel: f64::NAN,
        adj_r2_olkin_pratt: f64::NAN,
        f2_global,
        f2_local,
        label,
        f_stat,
        p_exact,
        df1: Some(q),
        df2: Some(df2),
        coefficient_intervals: intervals,
        ci_level: 0.95,
        ci_f2_local: None,
        n,
        q,
        p_ab: p_cols - 1,
        pseudo_r2_definition: Some(definition.tag().to_string()),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Dataset;
    use crate::rng;

    /// Balanced random-intercept data with known variances.
    fn simulate(
        n_groups: usize,
        per_group: usize,
        sigma_u: f64,
        sigma_e: f64,
        beta_b: f64,
        seed: u64,
    ) -> (GroupedDataset, ModelSpec) {
        let mut stream = rng::stream(seed, 0);
        let n = n_groups * per_group;
        let mut y = Vec::with_capacity(n);
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n);
        for group in 0..n_groups {
            let u = sigma_u * rng::standard_normal(&mut stream);
            for _ in 0..per_group {
                let xa = rng::standard_normal(&mut stream);
                let xb = rng::standard_normal(&mut stream);
                let e = sigma_e * rng::standard_normal(&mut stream);
                y.push(1.0 + 0.5 * xa + beta_b * xb + u + e);
                a.push(xa);
                b.push(xb);
                g.push(group as f64);
            }
        }
        let data = Dataset::new(vec![
            ("y".into(), y),
            ("a".into(), a),
            ("b".into(), b),
            ("g".into(), g),
        ])
        .unwrap();
        let grouped = GroupedDataset::from_column(data, "g").unwrap();
        let spec = ModelSpec::new("y", vec!["b".into()], vec!["a".into()]).unwrap();
        (grouped, spec)
    }

    #[test]
    fn zero_group_variance_reduces_to_ols() {
        // Seed 19 drives theta-hat onto the sigma2_u = 0 boundary, where the
        // fit must reproduce OLS; other seeds land at small positive values.
        let (data, spec) = simulate(20, 15, 0.0, 1.0, 0.8, 19);
        let lmm = fit_random_intercept(&data, &spec).unwrap();
        let pair = build_design(data.base(), &spec).unwrap();
        let ols = crate::regression::fit_ols(&pair.full, &pair.response).unwrap();
        assert_eq!(lmm.sigma2_u, 0.0);
        assert!(!lmm.converged, "boundary estimate must clear the flag");
        for (a, b) in lmm.fixed_coefficients.iter().zip(&ols.coefficients) {
            assert!(
                (a - b).abs() <= 1e-6 * b.abs().max(1.0),
                "lmm {a} vs ols {b}"
            );
        }
    }

    #[test]
    fn small_group_variance_estimates_stay_small() {
        for seed in [7, 11, 42] {
            let (data, spec) = simulate(20, 15, 0.0, 1.0, 0.8, seed);
            let lmm = fit_random_intercept(&data, &spec).unwrap();
            assert!(
                lmm.sigma2_u < 0.05,
                "seed {seed}: sigma2_u should be near zero, got {}",
                lmm.sigma2_u
            );
        }
    }

    #[test]
    fn recovers_known_variance_components() {
        let (data, spec) = simulate(50, 20, 1.0, 1.0, 0.5, 7);
        let fit = fit_random_intercept(&data, &spec).unwrap();
        assert!(fit.converged);
        assert!(
            fit.sigma2_u > 0.6 && fit.sigma2_u < 1.5,
            "sigma2_u = {}",
            fit.sigma2_u
        );
        assert!(
            fit.sigma2_e > 0.8 && fit.sigma2_e < 1.25,
            "sigma2_e = {}",
            fit.sigma2_e
        );
    }

    #[test]
    fn duplicate_column_is_singular() {
        let (data, _) = simulate(10, 10, 0.5, 1.0, 0.5, 3);
        // b duplicated as a covariate via an alias column.
        let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
        for name in ["y", "a", "b", "g"] {
            columns.push((name.into(), data.base().column(name).unwrap().to_vec()));
        }
        columns.push(("b_copy".into(), data.base().column("b").unwrap().to_vec()));
        let base = Dataset::new(columns).unwrap();
        let grouped = GroupedDataset::from_column(base, "g").unwrap();
        let spec =
            ModelSpec::new("y", vec!["b".into()], vec!["a".into(), "b_copy".into()]).unwrap();
        assert!(matches!(
            fit_random_intercept(&grouped, &spec).unwrap_err(),
            Error::RankDeficient { .. }
        ));
    }

    #[test]
    fn null_pseudo_r2_is_exactly_zero() {
        let (data, _) = simulate(12, 10, 0.7, 1.0, 0.5, 11);
        let n = data.base().n_rows();
        let y = data.base().column("y").unwrap().to_vec();
        let null_a = fit_design(&y, &intercept_design(n), &data).unwrap();
        let null_b = fit_design(&y, &intercept_design(n), &data).unwrap();
        assert_eq!(
            pseudo_r2(&null_b.fit, &null_a.fit, PseudoR2Def::TotalVariance),
            0.0
        );
        assert_eq!(
            pseudo_r2(&null_b.fit, &null_a.fit, PseudoR2Def::ResidualVariance),
            0.0
        );
    }

    #[test]
    fn zero_fixed_effect_gives_small_f2() {
        let (data, spec) = simulate(30, 12, 0.8, 1.0, 0.0, 19);
        let report = lmm_local_f2(&data, &spec, PseudoR2Def::TotalVariance).unwrap();
        assert!(
            report.f2_local.abs() < 0.03,
            "expected near-zero f2, got {}",
            report.f2_local
        );
        assert_eq!(report.variant, ReportVariant::Multilevel);
        assert_eq!(
            report.pseudo_r2_definition.as_deref(),
            Some("total-variance")
        );
    }

    #[test]
    fn report_carries_wald_test_and_intervals() {
        let (data, spec) = simulate(25, 12, 0.6, 1.0, 0.7, 23);
        let report = lmm_local_f2(&data, &spec, PseudoR2Def::ResidualVariance).unwrap();
        assert!(report.f_stat.unwrap() > 0.0);
        let p = report.p_exact.unwrap();
        assert!(p > 0.0 && p < 1.0);
        assert_eq!(report.coefficient_intervals.len(), 3);
        assert_eq!(
            report.pseudo_r2_definition.as_deref(),
            Some("residual-variance")
        );
    }

    #[test]
    fn monotone_reml_for_nested_models() {
        let (data, spec) = simulate(20, 15, 0.7, 1.0, 0.6, 31);
        let pair = build_design(data.base(), &spec).unwrap();
        let y = &pair.response;
        let reduced = fit_design(y, &pair.reduced, &data).unwrap();
        let full = fit_design(y, &pair.full, &data).unwrap();
        assert!(full.fit.reml_loglik >= reduced.fit.reml_loglik - 1e-6);
    }

    #[test]
    fn optimum_is_bracket_invariant() {
        // The profiled criterion is unimodal on these problems, so widening
        // the search bracket must not move the optimum.
        let (data, spec) = simulate(18, 14, 0.5, 1.0, 0.4, 37);
        let pair = build_design(data.base(), &spec).unwrap();
        let narrow =
            fit_design_bracketed(&pair.response, &pair.full, &data, LOG_THETA_LO, LOG_THETA_HI)
                .unwrap();
        let wide = fit_design_bracketed(&pair.response, &pair.full, &data, -20.0, 20.0).unwrap();
        assert!(narrow.fit.converged, "optimum should be interior");
        assert!(
            (narrow.fit.theta - wide.fit.theta).abs() <= 1e-5 * narrow.fit.theta.max(1e-12),
            "theta {} vs {}",
            narrow.fit.theta,
            wide.fit.theta
        );
        assert!((narrow.fit.reml_loglik - wide.fit.reml_loglik).abs() < 1e-8);
    }
}
