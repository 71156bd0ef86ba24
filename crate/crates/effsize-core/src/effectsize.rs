//! Global and local Cohen's f^2, benchmark classification, shrinkage
//! estimators for R^2, and the incremental F test.
//!
//! The two defining ratios:
//!
//! ```text
//! f^2   = R2_AB / (1 - R2_AB)
//! f_B^2 = (R2_AB - R2_A) / (1 - R2_AB)
//! ```
//!
//! where `R2_AB` is the full model including the focal block B and `R2_A`
//! the model without it.

use serde::Serialize;

use crate::dataio::{build_design, Dataset, ModelSpec};
use crate::error::{Error, Result};
use crate::regression::{coefficient_intervals, fit_ols, CoefficientInterval};
use crate::special::f_sf;

/// Hard floor for `1 - R2_AB`; below this the ratio is numerical noise.
pub const DENOMINATOR_GUARD: f64 = 1e-12;

/// Tolerance for clamping a numerically-negative increment on the nested
/// OLS path, where `R2_AB >= R2_A` holds in exact arithmetic.
const NESTED_SLACK: f64 = 1e-12;

/// Default confidence level for coefficient interval estimates in reports.
pub const DEFAULT_CI_LEVEL: f64 = 0.95;

/// Benchmark reference points for labeling f^2 magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchmarkConfig {
    pub small: f64,
    pub medium: f64,
    pub large: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            small: 0.02,
            medium: 0.15,
            large: 0.35,
        }
    }
}

impl BenchmarkConfig {
    pub fn new(small: f64, medium: f64, large: f64) -> Result<Self> {
        if !(0.0 < small && small < medium && medium < large) {
            return Err(Error::InvalidConfig(format!(
                "benchmarks must satisfy 0 < small < medium < large, got {small}, {medium}, {large}"
            )));
        }
        Ok(BenchmarkConfig { small, medium, large })
    }
}

/// Magnitude label. Boundary values classify upward: `f2 = small` is
/// already "small".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectLabel {
    BelowSmall,
    Small,
    Medium,
    Large,
}

impl EffectLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            EffectLabel::BelowSmall => "below-small",
            EffectLabel::Small => "small",
            EffectLabel::Medium => "medium",
            EffectLabel::Large => "large",
        }
    }
}

impl std::fmt::Display for EffectLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for EffectLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// Global f^2 = R^2 / (1 - R^2).
pub fn global_f2(r2: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r2) {
        return Err(Error::Domain(format!("R^2 must be in [0, 1], got {r2}")));
    }
    if 1.0 - r2 < DENOMINATOR_GUARD {
        return Err(Error::DenominatorGuard {
            r2,
            guard: DENOMINATOR_GUARD,
        });
    }
    Ok(r2 / (1.0 - r2))
}

/// Local f_B^2 = (R2_AB - R2_A) / (1 - R2_AB) for nested fits on the same
/// rows. A reduced-model R^2 above the full-model R^2 signals non-nested
/// misuse and is an error; increments within numerical noise clamp to 0.
pub fn local_f2(r2_a: f64, r2_ab: f64) -> Result<f64> {
    check_r2_pair(r2_a, r2_ab)?;
    if r2_a > r2_ab + NESTED_SLACK {
        return Err(Error::NonNested { r2_a, r2_ab });
    }
    Ok(((r2_ab - r2_a) / (1.0 - r2_ab)).max(0.0))
}

/// Local f^2 for externally supplied R^2 pairs (cross-fitted or non-nested
/// models). May be negative; callers are expected to flag that case.
pub fn local_f2_external(r2_a: f64, r2_ab: f64) -> Result<f64> {
    check_r2_pair(r2_a, r2_ab)?;
    Ok((r2_ab - r2_a) / (1.0 - r2_ab))
}

fn check_r2_pair(r2_a: f64, r2_ab: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r2_a) || !(0.0..=1.0).contains(&r2_ab) {
        return Err(Error::Domain(format!(
            "R^2 values must be in [0, 1], got r2_a={r2_a}, r2_ab={r2_ab}"
        )));
    }
    if 1.0 - r2_ab < DENOMINATOR_GUARD {
        return Err(Error::DenominatorGuard {
            r2: r2_ab,
            guard: DENOMINATOR_GUARD,
        });
    }
    Ok(())
}

/// Labels an f^2 value against the benchmarks (upward-inclusive bounds).
pub fn classify(f2: f64, benchmarks: &BenchmarkConfig) -> EffectLabel {
    if f2 >= benchmarks.large {
        EffectLabel::Large
    } else if f2 >= benchmarks.medium {
        EffectLabel::Medium
    } else if f2 >= benchmarks.small {
        EffectLabel::Small
    } else {
        EffectLabel::BelowSmall
    }
}

/// Shrinkage estimator choice for adjusted R^2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShrinkageMethod {
    /// 1 - (1 - R^2)(n - 1)/(n - p - 1)
    Ezekiel,
    /// Olkin-Pratt unbiased-type estimator, hypergeometric series in
    /// (1 - R^2) truncated at 7 terms.
    OlkinPratt,
}

/// Adjusted (shrunken) R^2 with `p` predictors excluding the intercept.
pub fn adjusted_r2(r2: f64, n: usize, p: usize, method: ShrinkageMethod) -> Result<f64> {
    if !(0.0..=1.0).contains(&r2) {
        return Err(Error::Domain(format!("R^2 must be in [0, 1], got {r2}")));
    }
    if n < p + 3 {
        return Err(Error::TooFewRows { need: p + 3, got: n });
    }
    let nf = n as f64;
    let pf = p as f64;
    match method {
        ShrinkageMethod::Ezekiel => Ok(1.0 - (1.0 - r2) * (nf - 1.0) / (nf - pf - 1.0)),
        ShrinkageMethod::OlkinPratt => {
            // 1 - ((n-3)/(n-p-1)) (1-R^2) 2F1(1, 1; (n-p+1)/2; 1-R^2),
            // with 2F1(1,1;c;z) = sum_k k! z^k / (c)_k, truncated at k = 6.
            let z = 1.0 - r2;
            let c = 0.5 * (nf - pf + 1.0);
            let mut term = 1.0;
            let mut series = 1.0;
            for k in 0..6 {
                let kf = k as f64;
                term *= (kf + 1.0) * z / (c + kf);
                series += term;
            }
            Ok(1.0 - (nf - 3.0) / (nf - pf - 1.0) * z * series)
        }
    }
}

/// The exact inputs to the local f^2 equation, as produced by two nested
/// OLS fits on the same rows.
#[derive(Debug, Clone, Copy)]
pub struct ModelComparison {
    pub r2_a: f64,
    pub r2_ab: f64,
    /// Number of focal columns |B|.
    pub q: usize,
    pub n: usize,
    /// Predictor count of the full model, excluding the intercept.
    pub p_ab: usize,
}

impl ModelComparison {
    pub fn new(r2_a: f64, r2_ab: f64, q: usize, n: usize, p_ab: usize) -> Result<Self> {
        check_r2_pair(r2_a, r2_ab)?;
        if r2_a > r2_ab + NESTED_SLACK {
            return Err(Error::NonNested { r2_a, r2_ab });
        }
        if q == 0 || q > p_ab {
            return Err(Error::InvalidConfig(format!(
                "focal count q={q} must satisfy 1 <= q <= p_ab={p_ab}"
            )));
        }
        if n < p_ab + 3 {
            return Err(Error::TooFewRows { need: p_ab + 3, got: n });
        }
        Ok(ModelComparison {
            r2_a: r2_a.min(r2_ab),
            r2_ab,
            q,
            n,
            p_ab,
        })
    }

    pub fn df_residual(&self) -> usize {
        self.n - self.p_ab - 1
    }

    pub fn local_f2(&self) -> f64 {
        ((self.r2_ab - self.r2_a) / (1.0 - self.r2_ab)).max(0.0)
    }
}

/// Incremental F test of the focal block.
#[derive(Debug, Clone, Copy)]
pub struct FTest {
    pub f_stat: f64,
    pub p_value: f64,
    pub df1: usize,
    pub df2: usize,
}

/// F = [(R2_AB - R2_A)/q] / [(1 - R2_AB)/(n - p_AB - 1)] with its exact
/// upper-tail p-value.
pub fn incremental_f_test(cmp: &ModelComparison) -> Result<FTest> {
    let df2 = cmp.df_residual();
    let f_stat = ((cmp.r2_ab - cmp.r2_a) / cmp.q as f64)
        / ((1.0 - cmp.r2_ab) / df2 as f64);
    let f_stat = f_stat.max(0.0);

    // Identity check against the second algebraic route.
    let via_f2 = cmp.local_f2() * df2 as f64 / cmp.q as f64;
    debug_assert!(
        (f_stat - via_f2).abs() <= 1e-12 * f_stat.max(1.0),
        "F identity violated: {f_stat} vs {via_f2}"
    );

    let p_value = f_sf(f_stat, cmp.q as f64, df2 as f64)?;
    Ok(FTest {
        f_stat,
        p_value,
        df1: cmp.q,
        df2,
    })
}

/// Which model class produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportVariant {
    Ols,
    Multilevel,
    Blackbox,
}

impl ReportVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReportVariant::Ols => "ols",
            ReportVariant::Multilevel => "multilevel",
            ReportVariant::Blackbox => "blackbox",
        }
    }
}

/// Everything a focal-effect claim should report: the effect size with its
/// label, the exact p-value, and interval estimates.
#[derive(Debug, Clone)]
pub struct EffectSizeReport {
    pub variant: ReportVariant,
    pub r2_a: f64,
    pub r2_ab: f64,
    pub adj_r2_ezekiel: f64,
    pub adj_r2_olkin_pratt: f64,
    pub f2_global: f64,
    pub f2_local: f64,
    pub label: EffectLabel,
    /// F statistic and exact p-value; absent where no distributional test
    /// applies (the black-box variant).
    pub f_stat: Option<f64>,
    pub p_exact: Option<f64>,
    pub df1: Option<usize>,
    pub df2: Option<usize>,
    pub coefficient_intervals: Vec<CoefficientInterval>,
    pub ci_level: f64,
    /// Bootstrap interval for the local f^2, when requested.
    pub ci_f2_local: Option<(f64, f64)>,
    pub n: usize,
    pub q: usize,
    pub p_ab: usize,
    /// Pseudo-R^2 definition tag, set by the multilevel variant.
    pub pseudo_r2_definition: Option<String>,
    pub warnings: Vec<String>,
}

/// Fits the reduced and full models on identical rows and returns the
/// comparison record.
pub fn compare(dataset: &Dataset, spec: &ModelSpec) -> Result<ModelComparison> {
    let pair = build_design(dataset, spec)?;
    let reduced = fit_ols(&pair.reduced, &pair.response)?;
    let full = fit_ols(&pair.full, &pair.response)?;
    debug_assert_eq!(reduced.n, full.n, "nested fits must share rows");
    ModelComparison::new(reduced.r2, full.r2, spec.focal.len(), full.n, full.p)
}

/// Full analysis: nested fits, both f^2 forms, benchmark label, incremental
/// F test with exact p-value, and coefficient intervals for the full model.
pub fn analyze(
    dataset: &Dataset,
    spec: &ModelSpec,
    benchmarks: &BenchmarkConfig,
) -> Result<EffectSizeReport> {
    let pair = build_design(dataset, spec)?;
    let reduced = fit_ols(&pair.reduced, &pair.response)?;
    let full = fit_ols(&pair.full, &pair.response)?;
    let cmp = ModelComparison::new(reduced.r2, full.r2, spec.focal.len(), full.n, full.p)?;

    let f2_local = cmp.local_f2();
    let f2_global = global_f2(cmp.r2_ab)?;
    let test = incremental_f_test(&cmp)?;
    let intervals = coefficient_intervals(&full, DEFAULT_CI_LEVEL)?;

    Ok(EffectSizeReport {
        variant: ReportVariant::Ols,
        r2_a: cmp.r2_a,
        r2_ab: cmp.r2_ab,
        adj_r2_ezekiel: adjusted_r2(cmp.r2_ab, cmp.n, cmp.p_ab, ShrinkageMethod::Ezekiel)?,
        adj_r2_olkin_pratt: adjusted_r2(cmp.r2_ab, cmp.n, cmp.p_ab, ShrinkageMethod::OlkinPratt)?,
        f2_global,
        f2_local,
        label: classify(f2_local, benchmarks),
        f_stat: Some(test.f_stat),
        p_exact: Some(test.p_value),
        df1: Some(test.df1),
        df2: Some(test.df2),
        coefficient_intervals: intervals,
        ci_level: DEFAULT_CI_LEVEL,
        ci_f2_local: None,
        n: cmp.n,
        q: cmp.q,
        p_ab: cmp.p_ab,
        pseudo_r2_definition: None,
        warnings: Vec::new(),
    })
}
