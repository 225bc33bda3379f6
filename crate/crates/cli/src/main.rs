use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use helixproj::classifier::{admissible_region, classify, classify_covariance};
use helixproj::correlation::{standardize, CorrelationMatrix};
use helixproj::geometry::{embed_gram, verify_projection_invariance, Configuration};
use helixproj::gp::{
    check_conditioning_identity, check_helix_multi_conditioning, empirical_covariance,
    sample, sample_conditioned, standardized_matrix, ConditioningReport, ProcessSpec,
};
use helixproj::io::{
    parse_gram_file, parse_metric_file, parse_points_csv, parse_times, to_json, versioned,
    write_region_csv, write_samples_csv,
};
use helixproj::metric::{classify_quadruple, embed_line, LineEmbedding, MetricError, QuadrupleClass};
use helixproj::tol::{self, Tolerances};
use serde::Serialize;
use thiserror::Error;

#[derive(Parser)]
#[command(name = "helixproj", version, about = "Check and classify projection-invariant configurations")]
struct Cli {
    /// Numerical tolerance; the default depends on the subcommand.
    #[arg(long, global = true, allow_hyphen_values = true)]
    tol: Option<f64>,
    /// Seed for all random sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Treat input matrices as raw covariances and standardize them.
    #[arg(long, global = true)]
    standardize: bool,
    /// Write the result here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a Gram matrix into helix pieces, quadruples and singletons.
    Classify { input: PathBuf },
    /// Check |<p(x), p(y)>| = |<x, y>| for every spherical projection.
    /// Input is a Gram JSON file or a point CSV (`label,x1,x2,...`).
    VerifyInvariance { input: PathBuf },
    /// Embed a metric space in the line, or exhibit an exceptional quadruple.
    Embed { input: PathBuf },
    /// Grid of admissible quadruple parameters as `x,y` CSV.
    AdmissibleRegion {
        #[arg(long, default_value_t = 5.0)]
        xmax: f64,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
    },
    /// Sample paths as CSV, one row per sample.
    Simulate {
        /// helix, taylor, laplace, quadruple:X,Y or gram:PATH
        #[arg(long)]
        process: String,
        #[arg(long, allow_hyphen_values = true)]
        times: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Conditioning identity, analytically or (with --samples) by Monte Carlo.
    ConditionCheck {
        #[arg(long)]
        process: String,
        /// One conditioning point, or several (helix only).
        #[arg(long, allow_hyphen_values = true)]
        s0: String,
        #[arg(long, allow_hyphen_values = true)]
        times: String,
        #[arg(long)]
        samples: Option<usize>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] helixproj::io::IoError),
    #[error(transparent)]
    Correlation(#[from] helixproj::correlation::CorrelationError),
    #[error(transparent)]
    Geometry(#[from] helixproj::geometry::GeometryError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Classifier(#[from] helixproj::classifier::ClassifierError),
    #[error(transparent)]
    Gp(#[from] helixproj::gp::GpError),
    #[error("{0}")]
    Usage(String),
}

/// Bytes to emit and whether the checked property held.
struct Outcome {
    body: Vec<u8>,
    holds: bool,
}

impl Outcome {
    fn json<T: Serialize>(report: T, holds: bool) -> Self {
        Self {
            body: to_json(&versioned(report)).into_bytes(),
            holds,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.display().to_string(),
        source,
    })
}

fn load_correlation(path: &Path, standardize_input: bool) -> Result<CorrelationMatrix, CliError> {
    let f = parse_gram_file(&read(path)?)?;
    if standardize_input {
        Ok(standardize(f.labels.clone(), f.matrix()?)?.correlation)
    } else {
        Ok(CorrelationMatrix::from_rows(f.labels, &f.gram)?)
    }
}

fn load_process(text: &str) -> Result<ProcessSpec, CliError> {
    match text.strip_prefix("gram:") {
        Some(path) => Ok(ProcessSpec::Explicit(load_correlation(Path::new(path), false)?)),
        None => Ok(text.parse()?),
    }
}

fn cmd_classify(input: &Path, tol_rel: Option<f64>, standardize_input: bool) -> Result<Outcome, CliError> {
    let mut tol = Tolerances::default();
    if let Some(t) = tol_rel {
        tol.metric_rel = t;
    }
    let report = if standardize_input {
        let f = parse_gram_file(&read(input)?)?;
        classify_covariance(f.labels.clone(), f.matrix()?, &tol)?
    } else {
        classify(&load_correlation(input, false)?, &tol)
    };
    let ok = report.is_classified();
    Ok(Outcome::json(report, ok))
}

fn cmd_verify(input: &Path, tol: f64, standardize_input: bool) -> Result<Outcome, CliError> {
    let is_csv = input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let config: Configuration = if is_csv {
        parse_points_csv(&read(input)?)?
    } else {
        embed_gram(&load_correlation(input, standardize_input)?)?
    };
    let report = verify_projection_invariance(&config, tol)?;
    let ok = report.passed;
    Ok(Outcome::json(report, ok))
}

#[derive(Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
enum EmbedReport {
    Line {
        #[serde(flatten)]
        embedding: LineEmbedding,
        isometry_error: f64,
    },
    /// Not embeddable; the witness is an exceptional quadruple.
    Exceptional {
        quadruple: [String; 4],
        #[serde(flatten)]
        class: QuadrupleClass,
    },
    /// Some triangle is not degenerate, so neither outcome applies.
    NotTriangleEqual { triple: [String; 3] },
}

fn cmd_embed(input: &Path, tol_rel: f64) -> Result<Outcome, CliError> {
    let m = parse_metric_file(&read(input)?)?.space()?;
    match embed_line(&m, tol_rel) {
        Ok(embedding) => {
            let isometry_error = embedding.isometry_error(&m);
            Ok(Outcome::json(EmbedReport::Line { embedding, isometry_error }, true))
        }
        Err(MetricError::NotEmbeddable(quadruple)) => {
            let idx: Vec<usize> = quadruple
                .iter()
                .map(|l| m.index_of(l).expect("witness labels come from the space"))
                .collect();
            let class = classify_quadruple(&m.subspace(&idx), tol_rel)?;
            Ok(Outcome::json(EmbedReport::Exceptional { quadruple, class }, true))
        }
        Err(MetricError::NotTriangleEqual(triple)) => {
            Ok(Outcome::json(EmbedReport::NotTriangleEqual { triple }, false))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_region(xmax: f64, step: f64) -> Result<Outcome, CliError> {
    let pts = admissible_region(xmax, step)?;
    let mut body = Vec::new();
    write_region_csv(&pts, &mut body)?;
    Ok(Outcome { body, holds: true })
}

fn cmd_simulate(process: &str, times: &str, n: usize, seed: u64) -> Result<Outcome, CliError> {
    let spec = load_process(process)?;
    let paths = sample(&spec, &parse_times(times)?, n, seed)?;
    let mut body = Vec::new();
    write_samples_csv(&paths, &mut body)?;
    Ok(Outcome { body, holds: true })
}

#[derive(Serialize)]
struct MonteCarloReport {
    process: String,
    s0: f64,
    times: Vec<f64>,
    samples: usize,
    seed: u64,
    multipliers: Vec<f64>,
    /// `signed`, or `absolute` when no real multiplier reproduces the
    /// residual signs and only magnitudes are compared.
    compared: &'static str,
    /// Largest `|empirical - phi(s) phi(t) K(s, t)|`.
    max_discrepancy: f64,
    /// Largest deviation in standard errors.
    max_z_score: f64,
    z_threshold: f64,
    passed: bool,
}

/// Entries beyond this many standard errors fail the Monte Carlo check.
const Z_THRESHOLD: f64 = 4.0;

fn cmd_condition(
    process: &str,
    s0: &str,
    times: &str,
    samples: Option<usize>,
    tol: f64,
    seed: u64,
) -> Result<Outcome, CliError> {
    let spec = load_process(process)?;
    let pivots = parse_times(s0)?;
    let times = parse_times(times)?;
    let analytic: ConditioningReport = match (pivots.as_slice(), &spec) {
        ([p], _) => check_conditioning_identity(&spec, *p, &times, tol)?,
        ([], _) => return Err(CliError::Usage("--s0 needs at least one point".into())),
        (_, ProcessSpec::HelixX) => check_helix_multi_conditioning(&pivots, &times, tol)?,
        _ => {
            return Err(CliError::Usage(
                "several conditioning points are only supported for the helix process".into(),
            ))
        }
    };
    let Some(n) = samples else {
        let ok = analytic.passed;
        return Ok(Outcome::json(analytic, ok));
    };
    let [p] = pivots.as_slice() else {
        return Err(CliError::Usage("Monte Carlo mode takes a single --s0".into()));
    };
    let paths = sample_conditioned(&spec, &times, *p, n, seed)?;
    let emp = empirical_covariance(&paths)?;
    let k = standardized_matrix(&spec, &times)?;
    let phi = &analytic.multipliers;
    let signed = analytic.sign_consistent;
    let target = k.map_with_location(|i, j, v| {
        let t = phi[i] * phi[j] * v;
        if signed {
            t
        } else {
            t.abs().copysign(emp.cov[(i, j)])
        }
    });
    let max_discrepancy = (&emp.cov - &target).amax();
    let max_z_score = emp.max_z_score(&target);
    let report = MonteCarloReport {
        process: spec.to_string(),
        s0: *p,
        times,
        samples: n,
        seed,
        multipliers: phi.clone(),
        compared: if signed { "signed" } else { "absolute" },
        max_discrepancy,
        max_z_score,
        z_threshold: Z_THRESHOLD,
        passed: max_z_score <= Z_THRESHOLD,
    };
    let ok = report.passed;
    Ok(Outcome::json(report, ok))
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    if let Some(t) = cli.tol {
        if !(t.is_finite() && t >= 0.0) {
            return Err(CliError::Usage(format!("--tol must be a nonnegative number, got {t}")));
        }
    }
    match &cli.command {
        Command::Classify { input } => cmd_classify(input, cli.tol, cli.standardize),
        Command::VerifyInvariance { input } => {
            cmd_verify(input, cli.tol.unwrap_or(tol::INVARIANCE), cli.standardize)
        }
        Command::Embed { input } => cmd_embed(input, cli.tol.unwrap_or(tol::METRIC_REL)),
        Command::AdmissibleRegion { xmax, step } => cmd_region(*xmax, *step),
        Command::Simulate { process, times, samples } => cmd_simulate(process, times, *samples, cli.seed),
        Command::ConditionCheck { process, s0, times, samples } => cmd_condition(
            process,
            s0,
            times,
            *samples,
            cli.tol.unwrap_or(tol::INVARIANCE),
            cli.seed,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match run(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let written = match &cli.out {
        Some(path) => fs::write(path, &outcome.body),
        None => std::io::stdout().write_all(&outcome.body),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    if outcome.holds {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
