//! Model-agnostic local f^2 for arbitrary scalar regressors.
//!
//! The procedure: compute baseline performance as an R^2-like quantity,
//! permute one predictor column at a time, recompute, and turn the loss of
//! explained variance into an f^2-style effect size. Oracles are
//! interrogated, never inspected: in-process via [`PredictionOracle`], out
//! of process via the line protocol of [`SubprocessOracle`].

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use crate::effectsize::{
    classify, BenchmarkConfig, EffectLabel, EffectSizeReport, ReportVariant, DENOMINATOR_GUARD,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::regression::LinearFit;
use crate::rng;

/// Handshake line a subprocess oracle must print on startup.
pub const ORACLE_HANDSHAKE: &str = "EFFSIZE-ORACLE 1";

/// Default per-batch timeout for subprocess oracles.
pub const DEFAULT_ORACLE_TIMEOUT: Duration = Duration::from_secs(60);

/// A black-box regressor: one prediction per predictor row.
pub trait PredictionOracle {
    fn predictor_names(&self) -> &[String];

    /// Whether repeated calls on the same rows return identical values.
    /// Verified once with a repeated probe batch before permutation runs.
    fn is_deterministic(&self) -> bool {
        true
    }

    fn predict(&mut self, rows: &Matrix) -> Result<Vec<f64>>;
}

/// In-process adapter wrapping a [`LinearFit`], so the whole pipeline is
/// testable without a child process.
#[derive(Debug, Clone)]
pub struct OlsOracle {
    names: Vec<String>,
    intercept: f64,
    slopes: Vec<f64>,
}

impl OlsOracle {
    /// The fit's design must have the intercept as column 0, as produced by
    /// `build_design`.
    pub fn from_fit(fit: &LinearFit) -> Self {
        OlsOracle {
            names: fit.names[1..].to_vec(),
            intercept: fit.coefficients[0],
            slopes: fit.coefficients[1..].to_vec(),
        }
    }
}

impl PredictionOracle for OlsOracle {
    fn predictor_names(&self) -> &[String] {
        &self.names
    }

    fn predict(&mut self, rows: &Matrix) -> Result<Vec<f64>> {
        if rows.n_cols() != self.slopes.len() {
            return Err(Error::Oracle(format!(
                "expected {} predictor columns, got {}",
                self.slopes.len(),
                rows.n_cols()
            )));
        }
        Ok((0..rows.n_rows())
            .map(|i| self.intercept + crate::linalg::dot(rows.row(i), &self.slopes))
            .collect())
    }
}

fn checked_predict(
    oracle: &mut dyn PredictionOracle,
    rows: &Matrix,
) -> Result<Vec<f64>> {
    let predictions = oracle.predict(rows)?;
    if predictions.len() != rows.n_rows() {
        return Err(Error::Oracle(format!(
            "oracle returned {} predictions for {} rows",
            predictions.len(),
            rows.n_rows()
        )));
    }
    if let Some(bad) = predictions.iter().find(|v| !v.is_finite()) {
        return Err(Error::Oracle(format!(
            "oracle returned a non-finite prediction: {bad}"
        )));
    }
    Ok(predictions)
}

/// R^2-like score of an oracle: `1 - MSE / var(y)` with the population
/// (1/n) variance convention. Negative when the oracle predicts worse than
/// the mean.
pub fn oracle_r2(oracle: &mut dyn PredictionOracle, x: &Matrix, y: &[f64]) -> Result<f64> {
    if x.n_rows() != y.len() {
        return Err(Error::InvalidSpec(format!(
            "predictor matrix has {} rows, response has {}",
            x.n_rows(),
            y.len()
        )));
    }
    if y.len() < 30 {
        return Err(Error::TooFewRows {
            need: 30,
            got: y.len(),
        });
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(Error::ConstantResponse);
    }
    let predictions = checked_predict(oracle, x)?;
    let mse = y
        .iter()
        .zip(&predictions)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    Ok(1.0 - mse / var)
}

/// Where permuted performance is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvaluationData {
    /// All supplied rows; in-sample optimism is flagged in the report.
    SameData,
    /// A seeded random subset of the supplied rows; fraction in (0, 0.5].
    Holdout(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct PermutationConfig {
    pub repeats: usize,
    pub seed: u64,
    pub evaluation: EvaluationData,
}

impl PermutationConfig {
    pub fn new(seed: u64) -> Self {
        PermutationConfig {
            repeats: 30,
            seed,
            evaluation: EvaluationData::SameData,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.repeats < 5 {
            return Err(Error::InvalidConfig(format!(
                "permutation repeats must be at least 5, got {}",
                self.repeats
            )));
        }
        if let EvaluationData::Holdout(f) = self.evaluation {
            if !(f > 0.0 && f <= 0.5) {
                return Err(Error::InvalidConfig(format!(
                    "holdout fraction must be in (0, 0.5], got {f}"
                )));
            }
        }
        Ok(())
    }
}

/// Permutation-based local f^2 for one focal column.
#[derive(Debug, Clone)]
pub struct PermutationF2 {
    pub f2: f64,
    /// Standard deviation of the per-repeat f^2 values.
    pub spread: f64,
    pub r2_base: f64,
    pub mean_r2_permuted: f64,
    pub repeats: usize,
    pub focal: String,
    pub n_eval: usize,
    pub warnings: Vec<String>,
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

fn same_multiset(a: &[f64], b: &[f64]) -> bool {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sa == sb
}

/// Baseline score, then `repeats` seeded permutations of the focal column
/// (all other columns untouched):
///
/// ```text
/// f2 = (R2_base - mean(R2_perm)) / (1 - R2_base)
/// ```
///
/// Deterministic given the seed; a mid-run oracle failure aborts the whole
/// computation.
pub fn permutation_local_f2(
    oracle: &mut dyn PredictionOracle,
    x: &Matrix,
    y: &[f64],
    focal: usize,
    config: &PermutationConfig,
) -> Result<PermutationF2> {
    config.validate()?;
    if focal >= x.n_cols() {
        return Err(Error::InvalidConfig(format!(
            "focal column index {focal} out of range for {} columns",
            x.n_cols()
        )));
    }

    // Evaluation rows, ascending for a deterministic layout.
    let rows: Vec<usize> = match config.evaluation {
        EvaluationData::SameData => (0..x.n_rows()).collect(),
        EvaluationData::Holdout(fraction) => {
            let mut all: Vec<usize> = (0..x.n_rows()).collect();
            let mut stream = rng::stream(config.seed, u64::MAX);
            rng::shuffle(&mut stream, &mut all);
            let keep = ((x.n_rows() as f64 * fraction).ceil() as usize).max(1);
            let mut chosen = all[..keep].to_vec();
            chosen.sort_unstable();
            chosen
        }
    };
    let x_eval = x.select_rows(&rows);
    let y_eval: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    let n_eval = rows.len();

    // Verify the determinism contract once with a repeated probe batch.
    if oracle.is_deterministic() {
        let probe = x_eval.select_rows(&(0..n_eval.min(8)).collect::<Vec<_>>());
        let first = checked_predict(oracle, &probe)?;
        let second = checked_predict(oracle, &probe)?;
        if first != second {
            return Err(Error::Oracle(
                "oracle declared deterministic but repeated probe predictions differ".into(),
            ));
        }
    }

    let r2_base = oracle_r2(oracle, &x_eval, &y_eval)?;
    if 1.0 - r2_base < DENOMINATOR_GUARD {
        return Err(Error::DenominatorGuard {
            r2: r2_base,
            guard: DENOMINATOR_GUARD,
        });
    }

    let focal_values = x_eval.column(focal);
    let mut per_repeat = Vec::with_capacity(config.repeats);
    let mut sum_perm = 0.0;
    for rep in 0..config.repeats {
        let mut stream = rng::stream(config.seed, rep as u64);
        let mut permuted = focal_values.clone();
        rng::shuffle(&mut stream, &mut permuted);
        debug_assert!(same_multiset(&permuted, &focal_values));

        let mut x_perm = x_eval.clone();
        x_perm.set_column(focal, &permuted);
        let r2_perm = oracle_r2(oracle, &x_perm, &y_eval)?;
        sum_perm += r2_perm;
        per_repeat.push((r2_base - r2_perm) / (1.0 - r2_base));
    }

    let mean_r2_permuted = sum_perm / config.repeats as f64;
    // The distributed form of (R2_base - mean(R2_perm)) / (1 - R2_base):
    // when a permutation cannot change predictions, every term is exactly
    // zero and so is the mean.
    let mean_f2 = per_repeat.iter().sum::<f64>() / per_repeat.len() as f64;
    let f2 = mean_f2;
    let spread = (per_repeat
        .iter()
        .map(|v| (v - mean_f2) * (v - mean_f2))
        .sum::<f64>()
        / (per_repeat.len() - 1) as f64)
        .sqrt();

    let names = oracle.predictor_names().to_vec();
    let focal_name = names
        .get(focal)
        .cloned()
        .unwrap_or_else(|| format!("column {focal}"));

    let mut warnings = Vec::new();
    if config.evaluation == EvaluationData::SameData {
        warnings.push(
            "performance evaluated on the supplied data; in-sample scores are optimistic"
                .to_string(),
        );
    }
    for j in 0..x_eval.n_cols() {
        if j == focal {
            continue;
        }
        let r = pearson(&focal_values, &x_eval.column(j));
        if r.abs() > 0.5 {
            let other = names
                .get(j)
                .cloned()
                .unwrap_or_else(|| format!("column {j}"));
            warnings.push(format!(
                "focal column `{focal_name}` correlates with `{other}` (|r| = {:.2}); permutation breaks their joint distribution and the f^2 may be distorted",
                r.abs()
            ));
        }
    }
    if f2.abs() < 2.0 * spread {
        warnings.push(format!(
            "f^2 = {f2:.6} is indistinguishable from zero at this spread ({spread:.6})"
        ));
    }

    Ok(PermutationF2 {
        f2,
        spread,
        r2_base,
        mean_r2_permuted,
        repeats: config.repeats,
        focal: focal_name,
        n_eval,
        warnings,
    })
}

/// Assembles the standard report from a permutation result. The permuted
/// mean plays the reduced-model role and the baseline the full-model role;
/// no distributional test applies, so the p-value is reported as not
/// applicable and the spread is carried instead.
pub fn blackbox_report(
    perm: &PermutationF2,
    n_predictors: usize,
    benchmarks: &BenchmarkConfig,
) -> EffectSizeReport {
    let label = if perm.f2 < 0.0 {
        EffectLabel::BelowSmall
    } else {
        classify(perm.f2, benchmarks)
    };
    let f2_global = if (0.0..1.0).contains(&perm.r2_base) {
        perm.r2_base / (1.0 - perm.r2_base)
    } else {
        f64::NAN
    };
    EffectSizeReport {
        variant: ReportVariant::Blackbox,
        r2_a: perm.mean_r2_permuted,
        r2_ab: perm.r2_base,
        adj_r2_ezekiel: f64::NAN,
        adj_r2_olkin_pratt: f64::NAN,
        f2_global,
        f2_local: perm.f2,
        label,
        f_stat: None,
        p_exact: None,
        df1: None,
        df2: None,
        coefficient_intervals: Vec::new(),
        ci_level: f64::NAN,
        ci_f2_local: None,
        n: perm.n_eval,
        q: 1,
        p_ab: n_predictors,
        pseudo_r2_definition: None,
        warnings: perm.warnings.clone(),
    }
}

enum ReaderEvent {
    Line(String),
    Eof,
    Err(String),
}

/// A child process speaking the line protocol: handshake on startup, then
/// per batch a CSV header, the rows, and a blank line on stdin; one decimal
/// prediction per row on stdout.
#[derive(Debug)]
pub struct SubprocessOracle {
    child: Child,
    stdin: ChildStdin,
    lines: mpsc::Receiver<ReaderEvent>,
    names: Vec<String>,
    timeout: Duration,
}

impl SubprocessOracle {
    /// Launches `command` and waits for the handshake line.
    pub fn spawn(
        command: &[String],
        predictor_names: Vec<String>,
        timeout: Duration,
    ) -> Result<Self> {
        if command.is_empty() {
            return Err(Error::InvalidConfig("oracle command is empty".into()));
        }
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Oracle(format!("failed to launch `{}`: {e}", command[0])))?;
        let stdin = child.stdin.take().expect("stdin was piped");
        let stdout = child.stdout.take().expect("stdout was piped");

        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                match line {
                    Ok(l) => {
                        if tx.send(ReaderEvent::Line(l)).is_err() {
                            return;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(ReaderEvent::Err(e.to_string()));
                        return;
                    }
                }
            }
            let _ = tx.send(ReaderEvent::Eof);
        });

        let mut oracle = SubprocessOracle {
            child,
            stdin,
            lines: rx,
            names: predictor_names,
            timeout,
        };
        let first = oracle.read_line_timeout()?;
        if first != ORACLE_HANDSHAKE {
            let _ = oracle.child.kill();
            return Err(Error::Handshake { first_line: first });
        }
        Ok(oracle)
    }

    fn read_line_timeout(&mut self) -> Result<String> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(ReaderEvent::Line(l)) => Ok(l),
            Ok(ReaderEvent::Eof) => Err(Error::Oracle("oracle closed its output".into())),
            Ok(ReaderEvent::Err(e)) => Err(Error::Oracle(format!("oracle read error: {e}"))),
            Err(_) => Err(Error::Oracle(format!(
                "oracle produced no output within {:?}",
                self.timeout
            ))),
        }
    }
}

impl PredictionOracle for SubprocessOracle {
    fn predictor_names(&self) -> &[String] {
        &self.names
    }

    fn predict(&mut self, rows: &Matrix) -> Result<Vec<f64>> {
        let mut batch = String::new();
        batch.push_str(&self.names.join(","));
        batch.push('\n');
        for i in 0..rows.n_rows() {
            let row = rows.row(i);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    batch.push(',');
                }
                batch.push_str(&v.to_string());
            }
            batch.push('\n');
        }
        batch.push('\n'); // blank line terminates the batch
        self.stdin
            .write_all(batch.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::Oracle(format!("failed to write batch: {e}")))?;

        let deadline = Instant::now() + self.timeout;
        let mut predictions = Vec::with_capacity(rows.n_rows());
        for _ in 0..rows.n_rows() {
            let remaining = deadline
                .checked_duration_since(Instant::now())
                .unwrap_or(Duration::ZERO);
            let line = match self.lines.recv_timeout(remaining) {
                Ok(ReaderEvent::Line(l)) => l,
                Ok(ReaderEvent::Eof) => {
                    return Err(Error::Oracle("oracle closed its output mid-batch".into()))
                }
                Ok(ReaderEvent::Err(e)) => {
                    return Err(Error::Oracle(format!("oracle read error: {e}")))
                }
                Err(_) => {
                    return Err(Error::Oracle(format!(
                        "oracle batch timed out after {:?}",
                        self.timeout
                    )))
                }
            };
            let value: f64 = line
                .trim()
                .parse()
                .map_err(|_| Error::Oracle(format!("oracle line `{line}` is not a number")))?;
            predictions.push(value);
        }
        Ok(predictions)
    }
}

impl Drop for SubprocessOracle {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
