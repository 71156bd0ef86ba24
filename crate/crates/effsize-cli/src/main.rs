//! `effsize` — effect sizes for regression-type models from the command
//! line. Subcommand per model class; JSON (or Markdown) reports on stdout;
//! every stochastic command is fully determined by its flags and seed.
//!
//! Exit codes: 0 success, 2 input/validation error, 3 numerical failure,
//! 4 oracle handshake failure.

use std::io::Write;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use effsize_core::blackbox::{
    blackbox_report, permutation_local_f2, EvaluationData, PermutationConfig, SubprocessOracle,
};
use effsize_core::dataio::{load_csv, Dataset, GroupedDataset, LoadOptions, ModelSpec};
use effsize_core::effectsize::{analyze, BenchmarkConfig};
use effsize_core::error::Error;
use effsize_core::linalg::Matrix;
use effsize_core::multilevel::{lmm_local_f2, PseudoR2Def};
use effsize_core::report::{content_digest, ReportBody, ReportDocument, ReportMetadata};
use effsize_core::resampling::{
    bootstrap_f2_ci, monte_carlo_stability, BootstrapConfig, MonteCarloConfig, PopulationSpec,
};

mod echo_mean;

#[derive(Parser)]
#[command(name = "effsize", version, about = "Global and local Cohen's f^2 for regression-type models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Nested OLS comparison: f^2, benchmark label, exact p, intervals.
    Analyze(AnalyzeArgs),
    /// Percentile bootstrap interval for the local f^2.
    Bootstrap(BootstrapArgs),
    /// Monte Carlo study of the R^2-based estimators (CSV by default).
    McStudy(McStudyArgs),
    /// Random-intercept multilevel local f^2 from pseudo-R^2.
    Lmm(LmmArgs),
    /// Permutation-based local f^2 for an external prediction oracle.
    Blackbox(BlackboxArgs),
    /// Built-in test oracle speaking the line protocol; predicts the batch
    /// grand mean for every row, so every permutation f^2 is exactly 0.
    OracleEchoMean,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Md,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum McFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PseudoR2Arg {
    Total,
    Residual,
}

#[derive(Args)]
struct DataArgs {
    /// CSV input (RFC 4180, header row, numeric cells).
    #[arg(long)]
    data: String,
    /// Response column name.
    #[arg(long)]
    response: String,
    /// Focal block B: comma-separated column names.
    #[arg(long, value_delimiter = ',', required = true)]
    focal: Vec<String>,
    /// Covariate set A: comma-separated column names (may be omitted).
    #[arg(long, value_delimiter = ',')]
    controls: Vec<String>,
    /// Listwise-delete rows containing "", "NA", or "NaN".
    #[arg(long)]
    drop_missing: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Benchmark thresholds small,medium,large.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    benchmarks: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Add a bootstrap interval for f^2 with this many replicates.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Seed for the bootstrap interval (required with --bootstrap).
    #[arg(long)]
    seed: Option<u64>,
    /// Timestamp string to embed in the report metadata.
    #[arg(long)]
    timestamp: Option<String>,
}

#[derive(Args)]
struct BootstrapArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 2000)]
    replicates: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    timestamp: Option<String>,
}

#[derive(Args)]
struct McStudyArgs {
    /// Population R^2 of the reduced model (target construction).
    #[arg(long, conflicts_with_all = ["beta_a", "beta_b", "noise_var"])]
    rho2_a: Option<f64>,
    /// Population R^2 of the full model (target construction).
    #[arg(long, requires = "rho2_a")]
    rho2_ab: Option<f64>,
    /// Covariate column count for the target construction.
    #[arg(long, default_value_t = 1)]
    covariates: usize,
    /// Focal column count for the target construction.
    #[arg(long, default_value_t = 1)]
    focal_count: usize,
    /// Explicit covariate coefficients (comma-separated).
    #[arg(long, value_delimiter = ',')]
    beta_a: Option<Vec<f64>>,
    /// Explicit focal coefficients (comma-separated).
    #[arg(long, value_delimiter = ',', requires = "noise_var")]
    beta_b: Option<Vec<f64>>,
    /// Noise variance for the explicit-coefficient population.
    #[arg(long)]
    noise_var: Option<f64>,
    /// Sample sizes, strictly increasing.
    #[arg(long, value_delimiter = ',', required = true)]
    n_grid: Vec<usize>,
    /// Replicates per sample size.
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    format: McFormat,
    #[arg(long)]
    timestamp: Option<String>,
}

#[derive(Args)]
struct LmmArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Grouping column (numeric group codes).
    #[arg(long)]
    group: String,
    #[arg(long, value_enum, default_value = "total")]
    pseudo_r2: PseudoR2Arg,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    timestamp: Option<String>,
}

#[derive(Args)]
struct BlackboxArgs {
    /// CSV input (RFC 4180, header row, numeric cells).
    #[arg(long)]
    data: String,
    /// Response column name.
    #[arg(long)]
    response: String,
    /// Focal column to permute.
    #[arg(long)]
    focal: String,
    /// Predictor columns fed to the oracle, in order; defaults to every
    /// non-response column in file order.
    #[arg(long, value_delimiter = ',')]
    predictors: Vec<String>,
    /// Oracle command line, split on whitespace (no shell quoting).
    #[arg(long)]
    oracle_cmd: String,
    /// Per-batch timeout in seconds.
    #[arg(long, default_value_t = 60)]
    timeout: u64,
    #[arg(long, default_value_t = 30)]
    repeats: usize,
    #[arg(long)]
    seed: u64,
    /// Evaluate on a seeded holdout fraction instead of all rows.
    #[arg(long)]
    holdout: Option<f64>,
    /// Benchmark thresholds small,medium,large.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    benchmarks: Option<Vec<f64>>,
    #[arg(long)]
    drop_missing: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    timestamp: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Bootstrap(args) => cmd_bootstrap(args),
        Command::McStudy(args) => cmd_mc_study(args),
        Command::Lmm(args) => cmd_lmm(args),
        Command::Blackbox(args) => cmd_blackbox(args),
        Command::OracleEchoMean => {
            return match echo_mean::run() {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("effsize oracle-echo-mean: {e}");
                    ExitCode::from(2)
                }
            }
        }
    };
    match result {
        Ok(output) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(output.as_bytes()).is_err() {
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("effsize: {err}");
            ExitCode::from(exit_class(&err))
        }
    }
}

/// Exit-code taxonomy: every failure maps to exactly one of {2, 3, 4}.
fn exit_class(err: &Error) -> u8 {
    match err {
        Error::Csv { .. }
        | Error::DuplicateColumn(_)
        | Error::EmptyColumnName
        | Error::UnknownColumn(_)
        | Error::MissingValue { .. }
        | Error::NonFinite { .. }
        | Error::ZeroRows { .. }
        | Error::ConstantColumn(_)
        | Error::TooFewRows { .. }
        | Error::InvalidSpec(_)
        | Error::InvalidConfig(_)
        | Error::Io(_) => 2,
        Error::ConstantResponse
        | Error::RankDeficient { .. }
        | Error::Domain(_)
        | Error::DenominatorGuard { .. }
        | Error::NonNested { .. }
        | Error::DegenerateReplicates { .. }
        | Error::NonConvergence(_)
        | Error::Oracle(_) => 3,
        Error::Handshake { .. } => 4,
    }
}

struct LoadedData {
    dataset: Dataset,
    digest: String,
    rows_dropped: usize,
}

fn read_dataset(path: &str, drop_missing: bool) -> Result<LoadedData, Error> {
    let bytes = std::fs::read(path)?;
    let digest = content_digest(&bytes);
    let load = load_csv(&bytes[..], &LoadOptions { drop_missing })?;
    Ok(LoadedData {
        dataset: load.dataset,
        digest,
        rows_dropped: load.rows_dropped,
    })
}

fn model_spec(args: &DataArgs) -> Result<ModelSpec, Error> {
    ModelSpec::new(
        args.response.clone(),
        args.focal.clone(),
        args.controls.clone(),
    )
}

fn benchmarks_from(values: &Option<Vec<f64>>) -> Result<BenchmarkConfig, Error> {
    match values {
        None => Ok(BenchmarkConfig::default()),
        Some(v) => BenchmarkConfig::new(v[0], v[1], v[2]),
    }
}

fn metadata(
    seed: Option<u64>,
    timestamp: Option<String>,
    digest: Option<String>,
) -> ReportMetadata {
    ReportMetadata {
        tool: "effsize".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        timestamp,
        dataset_digest: digest,
    }
}

fn render(doc: &mut ReportDocument, format: Format) -> Result<String, Error> {
    doc.dedup_warnings();
    match format {
        Format::Json => doc.to_json(),
        Format::Md => doc.to_markdown(),
    }
}

fn dropped_rows_warning(warnings: &mut Vec<String>, rows_dropped: usize) {
    if rows_dropped > 0 {
        warnings.push(format!(
            "{rows_dropped} row(s) removed by listwise deletion"
        ));
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<String, Error> {
    let loaded = read_dataset(&args.data.data, args.data.drop_missing)?;
    let spec = model_spec(&args.data)?;
    let benchmarks = benchmarks_from(&args.benchmarks)?;
    let mut report = analyze(&loaded.dataset, &spec, &benchmarks)?;

    if let Some(replicates) = args.bootstrap {
        let seed = args
            .seed
            .ok_or_else(|| Error::InvalidConfig("--bootstrap requires --seed".into()))?;
        let config = BootstrapConfig {
            replicates,
            level: 0.95,
            seed,
        };
        let interval = bootstrap_f2_ci(&loaded.dataset, &spec, &config)?;
        report.ci_f2_local = Some((interval.low, interval.high));
        if interval.skipped > 0 {
            report.warnings.push(format!(
                "{} bootstrap replicate(s) skipped as degenerate",
                interval.skipped
            ));
        }
    }

    let mut warnings = report.warnings.clone();
    dropped_rows_warning(&mut warnings, loaded.rows_dropped);
    let mut doc = ReportDocument {
        metadata: metadata(args.seed, args.timestamp, Some(loaded.digest)),
        variant: "ols".into(),
        body: ReportBody::EffectSize(report),
        warnings,
    };
    render(&mut doc, args.format)
}

fn cmd_bootstrap(args: BootstrapArgs) -> Result<String, Error> {
    let loaded = read_dataset(&args.data.data, args.data.drop_missing)?;
    let spec = model_spec(&args.data)?;
    let config = BootstrapConfig {
        replicates: args.replicates,
        level: args.level,
        seed: args.seed,
    };
    let interval = bootstrap_f2_ci(&loaded.dataset, &spec, &config)?;
    let mut warnings = Vec::new();
    if interval.skipped > 0 {
        warnings.push(format!(
            "{} bootstrap replicate(s) skipped as degenerate",
            interval.skipped
        ));
    }
    dropped_rows_warning(&mut warnings, loaded.rows_dropped);
    let mut doc = ReportDocument {
        metadata: metadata(Some(args.seed), args.timestamp, Some(loaded.digest)),
        variant: "ols".into(),
        body: ReportBody::Bootstrap(interval),
        warnings,
    };
    render(&mut doc, args.format)
}

fn cmd_mc_study(args: McStudyArgs) -> Result<String, Error> {
    let population = match (&args.rho2_a, &args.beta_b) {
        (Some(rho2_a), None) => {
            let rho2_ab = args
                .rho2_ab
                .ok_or_else(|| Error::InvalidConfig("--rho2-a requires --rho2-ab".into()))?;
            PopulationSpec::TargetRho2 {
                rho2_a: *rho2_a,
                rho2_ab,
                n_covariates: args.covariates,
                n_focal: args.focal_count,
            }
        }
        (None, Some(beta_b)) => PopulationSpec::Coefficients {
            beta_covariates: args.beta_a.clone().unwrap_or_default(),
            beta_focal: beta_b.clone(),
            noise_variance: args.noise_var.expect("clap enforces --noise-var"),
            covariance: None,
        },
        _ => {
            return Err(Error::InvalidConfig(
                "specify either --rho2-a/--rho2-ab or --beta-b/--noise-var".into(),
            ))
        }
    };
    let config = MonteCarloConfig {
        population,
        n_grid: args.n_grid.clone(),
        reps_per_n: args.reps,
        seed: args.seed,
    };
    let summary = monte_carlo_stability(&config)?;
    let mut doc = ReportDocument {
        metadata: metadata(Some(args.seed), args.timestamp, None),
        variant: "ols".into(),
        body: ReportBody::Stability(summary),
        warnings: Vec::new(),
    };
    match args.format {
        McFormat::Csv => Ok(doc.to_csv().expect("stability body renders as csv")),
        McFormat::Json => render(&mut doc, Format::Json),
    }
}

fn cmd_lmm(args: LmmArgs) -> Result<String, Error> {
    let loaded = read_dataset(&args.data.data, args.data.drop_missing)?;
    let spec = model_spec(&args.data)?;
    let grouped = GroupedDataset::from_column(loaded.dataset, &args.group)?;
    let definition = match args.pseudo_r2 {
        PseudoR2Arg::Total => PseudoR2Def::TotalVariance,
        PseudoR2Arg::Residual => PseudoR2Def::ResidualVariance,
    };
    let report = lmm_local_f2(&grouped, &spec, definition)?;
    let mut warnings = report.warnings.clone();
    dropped_rows_warning(&mut warnings, loaded.rows_dropped);
    let mut doc = ReportDocument {
        metadata: metadata(None, args.timestamp, Some(loaded.digest)),
        variant: "multilevel".into(),
        body: ReportBody::EffectSize(report),
        warnings,
    };
    render(&mut doc, args.format)
}

fn cmd_blackbox(args: BlackboxArgs) -> Result<String, Error> {
    let loaded = read_dataset(&args.data, args.drop_missing)?;
    let dataset = &loaded.dataset;
    let benchmarks = benchmarks_from(&args.benchmarks)?;

    let predictors: Vec<String> = if args.predictors.is_empty() {
        dataset
            .names()
            .iter()
            .filter(|n| **n != args.response)
            .cloned()
            .collect()
    } else {
        args.predictors.clone()
    };
    let focal_index = predictors
        .iter()
        .position(|n| *n == args.focal)
        .ok_or_else(|| Error::UnknownColumn(args.focal.clone()))?;

    let y = dataset.column(&args.response)?.to_vec();
    let columns: Result<Vec<Vec<f64>>, Error> = predictors
        .iter()
        .map(|name| dataset.column(name).map(|c| c.to_vec()))
        .collect();
    let x = Matrix::from_columns(&columns?);

    let command: Vec<String> = args
        .oracle_cmd
        .split_whitespace()
        .map(str::to_string)
        .collect();
    let mut oracle = SubprocessOracle::spawn(
        &command,
        predictors.clone(),
        Duration::from_secs(args.timeout),
    )?;

    let config = PermutationConfig {
        repeats: args.repeats,
        seed: args.seed,
        evaluation: match args.holdout {
            None => EvaluationData::SameData,
            Some(fraction) => EvaluationData::Holdout(fraction),
        },
    };
    let perm = permutation_local_f2(&mut oracle, &x, &y, focal_index, &config)?;
    let mut report = blackbox_report(&perm, predictors.len(), &benchmarks);
    report.warnings.push(format!(
        "blackbox f^2 spread over {} repeats: {:.6e}",
        perm.repeats, perm.spread
    ));

    let mut warnings = report.warnings.clone();
    dropped_rows_warning(&mut warnings, loaded.rows_dropped);
    let mut doc = ReportDocument {
        metadata: metadata(Some(args.seed), args.timestamp, Some(loaded.digest)),
        variant: "blackbox".into(),
        body: ReportBody::EffectSize(report),
        warnings,
    };
    render(&mut doc, args.format)
}
