//! Gaussian processes with the conditioning property: exact kernels,
//! the time-change identities relating the Taylor and Laplace processes to
//! the sech process, the conditioning identity, and seeded sampling.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::classifier::{quadruple_labels, quadruple_pattern};
use crate::correlation::{CorrelationError, CorrelationMatrix};
use crate::tol;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("time {t} is outside the domain of {kind}")]
    Domain { kind: &'static str, t: f64 },
    #[error("zero variance at time {0}")]
    ZeroVariance(f64),
    #[error("conditioning point {s0} coincides with time {t} (|K| = 1)")]
    DegenerateConditioning { s0: f64, t: f64 },
    #[error("conditioning point {0} is one of the evaluation times")]
    ConditioningPointInTimes(f64),
    #[error("kernel matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("need at least 2 samples, got {0}")]
    InsufficientSamples(usize),
    #[error("{0} is not supported for this process")]
    Unsupported(&'static str),
    #[error("invalid process spec {0:?}")]
    InvalidSpec(String),
    #[error(transparent)]
    Correlation(#[from] CorrelationError),
}

/// A centered Gaussian process given by its covariance kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum ProcessSpec {
    /// `E X(s) X(t) = sech(t - s)`, `t` real.
    HelixX,
    /// Random Taylor series, `E f(s) f(t) = 1 / (1 - s t)`, `t in (-1, 1)`.
    TaylorF,
    /// Random Laplace transform, `E g(s) g(t) = 1 / (s + t)`, `t > 0`.
    LaplaceG,
    /// Exceptional quadruple on `A, B, C, D`, indexed by times `0..=3`.
    QuadrupleY { x: f64, y: f64 },
    /// A fixed correlation matrix, indexed by row number.
    Explicit(CorrelationMatrix),
}

impl ProcessSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::HelixX => "helix",
            Self::TaylorF => "taylor",
            Self::LaplaceG => "laplace",
            Self::QuadrupleY { .. } => "quadruple",
            Self::Explicit(_) => "explicit",
        }
    }

    fn index(&self, t: f64, n: usize) -> Result<usize, GpError> {
        if t.fract() == 0.0 && t >= 0.0 && (t as usize) < n {
            Ok(t as usize)
        } else {
            Err(GpError::Domain { kind: self.name(), t })
        }
    }

    /// Whether `t` lies in the index set of the process.
    pub fn check_domain(&self, t: f64) -> Result<(), GpError> {
        let ok = match self {
            _ if !t.is_finite() => false,
            Self::HelixX => true,
            Self::TaylorF => t.abs() < 1.0,
            Self::LaplaceG => t > 0.0,
            Self::QuadrupleY { .. } => return self.index(t, 4).map(|_| ()),
            Self::Explicit(c) => return self.index(t, c.len()).map(|_| ()),
        };
        if ok {
            Ok(())
        } else {
            Err(GpError::Domain { kind: self.name(), t })
        }
    }

    /// Human-readable label of an index point.
    pub fn label(&self, t: f64) -> Result<String, GpError> {
        self.check_domain(t)?;
        Ok(match self {
            Self::QuadrupleY { .. } => quadruple_labels()[t as usize].clone(),
            Self::Explicit(c) => c.labels()[t as usize].clone(),
            _ => format!("{t}"),
        })
    }
}

impl fmt::Display for ProcessSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::QuadrupleY { x, y } => write!(f, "quadruple:{x},{y}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for ProcessSpec {
    type Err = GpError;

    /// Parses `helix`, `taylor`, `laplace` or `quadruple:X,Y`. Explicit
    /// matrices have no textual form.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GpError::InvalidSpec(s.to_string());
        match s.trim() {
            "helix" => Ok(Self::HelixX),
            "taylor" => Ok(Self::TaylorF),
            "laplace" => Ok(Self::LaplaceG),
            other => {
                let params = other.strip_prefix("quadruple:").ok_or_else(bad)?;
                let (x, y) = params.split_once(',').ok_or_else(bad)?;
                let x: f64 = x.trim().parse().map_err(|_| bad())?;
                let y: f64 = y.trim().parse().map_err(|_| bad())?;
                if !(x.is_finite() && y.is_finite() && x > 0.0 && y > 0.0) {
                    return Err(bad());
                }
                Ok(Self::QuadrupleY { x, y })
            }
        }
    }
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

/// Exact covariance `K(s, t)`.
pub fn kernel_eval(spec: &ProcessSpec, s: f64, t: f64) -> Result<f64, GpError> {
    spec.check_domain(s)?;
    spec.check_domain(t)?;
    Ok(match spec {
        ProcessSpec::HelixX => sech(t - s),
        ProcessSpec::TaylorF => 1.0 / (1.0 - s * t),
        ProcessSpec::LaplaceG => 1.0 / (s + t),
        ProcessSpec::QuadrupleY { x, y } => quadruple_pattern(*x, *y)[(s as usize, t as usize)],
        ProcessSpec::Explicit(c) => c.get(s as usize, t as usize),
    })
}

/// Kernel of the unit-variance process, `K(s,t) / sqrt(K(s,s) K(t,t))`.
pub fn standardized_kernel(spec: &ProcessSpec, s: f64, t: f64) -> Result<f64, GpError> {
    let vs = kernel_eval(spec, s, s)?;
    let vt = kernel_eval(spec, t, t)?;
    if vs <= 0.0 {
        return Err(GpError::ZeroVariance(s));
    }
    if vt <= 0.0 {
        return Err(GpError::ZeroVariance(t));
    }
    if s == t {
        return Ok(1.0);
    }
    Ok(kernel_eval(spec, s, t)? / (vs * vt).sqrt())
}

pub fn kernel_matrix(spec: &ProcessSpec, times: &[f64]) -> Result<DMatrix<f64>, GpError> {
    let n = times.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel_eval(spec, times[i], times[j])?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

pub fn standardized_matrix(spec: &ProcessSpec, times: &[f64]) -> Result<DMatrix<f64>, GpError> {
    let n = times.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = standardized_kernel(spec, times[i], times[j])?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

fn labels_for(spec: &ProcessSpec, times: &[f64]) -> Result<Vec<String>, GpError> {
    times.iter().map(|&t| spec.label(t)).collect()
}

/// Maximum errors of the two time-change identities over all pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeChangeReport {
    pub passed: bool,
    /// `max | K_f(tanh s, tanh t) / (cosh s cosh t) - sech(s - t) |`
    pub taylor_max_error: f64,
    /// `max | sqrt(2 e^{2s}) sqrt(2 e^{2t}) K_g(e^{2s}, e^{2t}) - sech(s - t) |`
    pub laplace_max_error: f64,
}

/// Checks that `f(tanh t) / cosh t` and `sqrt(2 e^{2t}) g(e^{2t})` have the
/// covariance `sech(t - s)`, analytically, at all pairs of `times`.
///
/// Times so large that `tanh t` rounds to 1 are outside the Taylor domain
/// and make the check fail.
pub fn check_time_change(times: &[f64], tol: f64) -> TimeChangeReport {
    let mut taylor: f64 = 0.0;
    let mut laplace: f64 = 0.0;
    for &s in times {
        for &t in times {
            let target = sech(s - t);
            match kernel_eval(&ProcessSpec::TaylorF, s.tanh(), t.tanh()) {
                Ok(k) => {
                    taylor = taylor.max((k / (s.cosh() * t.cosh()) - target).abs());
                    let std = standardized_kernel(&ProcessSpec::TaylorF, s.tanh(), t.tanh())
                        .expect("domain checked above");
                    taylor = taylor.max((std - target).abs());
                }
                Err(_) => taylor = f64::INFINITY,
            }
            let (u, v) = ((2.0 * s).exp(), (2.0 * t).exp());
            match kernel_eval(&ProcessSpec::LaplaceG, u, v) {
                Ok(k) => {
                    laplace = laplace.max(((2.0 * u).sqrt() * (2.0 * v).sqrt() * k - target).abs());
                    let std = standardized_kernel(&ProcessSpec::LaplaceG, u, v)
                        .expect("domain checked above");
                    laplace = laplace.max((std - target).abs());
                }
                Err(_) => laplace = f64::INFINITY,
            }
        }
    }
    TimeChangeReport {
        passed: taylor <= tol && laplace <= tol,
        taylor_max_error: taylor,
        laplace_max_error: laplace,
    }
}

fn check_conditioning_point(spec: &ProcessSpec, times: &[f64], s0: f64) -> Result<Vec<f64>, GpError> {
    spec.check_domain(s0)?;
    if times.contains(&s0) {
        return Err(GpError::ConditioningPointInTimes(s0));
    }
    times
        .iter()
        .map(|&t| {
            let k = standardized_kernel(spec, t, s0)?;
            if k.abs() >= 1.0 - tol::DUPLICATE {
                Err(GpError::DegenerateConditioning { s0, t })
            } else {
                Ok(k)
            }
        })
        .collect()
}

/// Covariance of the standardized residuals
/// `(Z(t) - K(t,s0) Z(s0)) / sqrt(1 - K(t,s0)^2)` of the unit-variance
/// version of `spec`.
pub fn condition_residual(
    spec: &ProcessSpec,
    times: &[f64],
    s0: f64,
) -> Result<CorrelationMatrix, GpError> {
    let k0 = check_conditioning_point(spec, times, s0)?;
    let k = standardized_matrix(spec, times)?;
    let n = times.len();
    let m = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            (k[(i, j)] - k0[i] * k0[j]) / ((1.0 - k0[i] * k0[i]) * (1.0 - k0[j] * k0[j])).sqrt()
        }
    });
    Ok(CorrelationMatrix::new(labels_for(spec, times)?, m)?)
}

/// Conditional covariance of the unit-variance process on `times` given
/// that it vanishes at every point of `pivots`, computed by conditioning on
/// one pivot after the other (iterated Schur complements).
pub fn conditional_covariance(
    spec: &ProcessSpec,
    times: &[f64],
    pivots: &[f64],
) -> Result<DMatrix<f64>, GpError> {
    for &p in pivots {
        if times.contains(&p) {
            return Err(GpError::ConditioningPointInTimes(p));
        }
    }
    let all: Vec<f64> = pivots.iter().chain(times).copied().collect();
    let mut c = standardized_matrix(spec, &all)?;
    let n = all.len();
    for (p, &s0) in pivots.iter().enumerate() {
        let var = c[(p, p)];
        if var <= tol::DUPLICATE {
            return Err(GpError::DegenerateConditioning { s0, t: s0 });
        }
        let col = c.column(p).into_owned();
        for i in 0..n {
            for j in 0..n {
                c[(i, j)] -= col[i] * col[j] / var;
            }
        }
    }
    let k = pivots.len();
    Ok(c.view((k, k), (times.len(), times.len())).into_owned())
}

/// Standardized version of [`conditional_covariance`].
pub fn iterated_residual(
    spec: &ProcessSpec,
    times: &[f64],
    pivots: &[f64],
) -> Result<CorrelationMatrix, GpError> {
    let c = conditional_covariance(spec, times, pivots)?;
    let n = times.len();
    for i in 0..n {
        if c[(i, i)] <= tol::DUPLICATE {
            return Err(GpError::DegenerateConditioning {
                s0: pivots.first().copied().unwrap_or(f64::NAN),
                t: times[i],
            });
        }
    }
    let m = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            c[(i, j)] / (c[(i, i)] * c[(j, j)]).sqrt()
        }
    });
    Ok(CorrelationMatrix::new(labels_for(spec, times)?, m)?)
}

/// Multiplier `prod_i tanh(t - s_i)` of the sech process conditioned to
/// vanish at the `pivots`.
pub fn helix_multiplier(t: f64, pivots: &[f64]) -> f64 {
    pivots.iter().map(|&s| (t - s).tanh()).product()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditioningReport {
    pub process: String,
    pub pivots: Vec<f64>,
    pub times: Vec<f64>,
    /// `phi(t)` for each time, with `phi(t)^2 = 1 - K(t, s0)^2`.
    pub multipliers: Vec<f64>,
    /// `max | C(s,t) - phi(s) phi(t) K(s,t) |` over all pairs, where `C` is
    /// the conditional covariance.
    pub max_discrepancy: f64,
    /// `max | |C(s,t)| - |phi(s) phi(t) K(s,t)| |`: the projective form,
    /// blind to signs.
    pub max_abs_discrepancy: f64,
    pub tol: f64,
    /// `max_abs_discrepancy <= tol`.
    pub passed: bool,
    /// `max_discrepancy <= tol`: the residual is `phi Z` for a real `phi`,
    /// signs included. False for exceptional quadruples, whose residual
    /// signs around a triangle cannot come from any multiplier.
    pub sign_consistent: bool,
}

/// Signs `sigma(t)` with `sigma(s) sigma(t) = sign(C(s,t) K(s,t))`, fixed
/// along a spanning forest: each time takes its sign from the earliest
/// earlier time it is correlated with.
fn spanning_signs(c: &DMatrix<f64>, k: &DMatrix<f64>) -> Vec<f64> {
    let n = c.nrows();
    let mut sigma = vec![1.0; n];
    for t in 1..n {
        if let Some(r) = (0..t).find(|&r| (c[(t, r)] * k[(t, r)]).abs() > tol::ORTHOGONAL) {
            sigma[t] = sigma[r] * (c[(t, r)] * k[(t, r)]).signum();
        }
    }
    sigma
}

/// Verifies `Cov(Z(s), Z(t) | Z(s0) = 0) = phi(s) phi(t) K(s, t)` on the
/// unit-variance version of `spec`. For the sech process
/// `phi(t) = tanh(t - s0)`; for other kinds `|phi(t)| = sqrt(1 - K(t,s0)^2)`
/// with signs fitted to the conditional covariance. `passed` only asks for
/// the identity up to signs; see [`ConditioningReport::sign_consistent`].
pub fn check_conditioning_identity(
    spec: &ProcessSpec,
    s0: f64,
    times: &[f64],
    tol: f64,
) -> Result<ConditioningReport, GpError> {
    let k0 = check_conditioning_point(spec, times, s0)?;
    let k = standardized_matrix(spec, times)?;
    let c = conditional_covariance(spec, times, &[s0])?;
    let multipliers: Vec<f64> = match spec {
        ProcessSpec::HelixX => times.iter().map(|&t| (t - s0).tanh()).collect(),
        _ => {
            let sigma = spanning_signs(&c, &k);
            k0.iter()
                .zip(sigma)
                .map(|(&r, s)| s * (1.0 - r * r).sqrt())
                .collect()
        }
    };
    Ok(report(spec, vec![s0], times, multipliers, &c, &k, tol))
}

/// Multi-point version for the sech process: conditioning on all `pivots`
/// multiplies the process by `prod_i tanh(t - s_i)`.
pub fn check_helix_multi_conditioning(
    pivots: &[f64],
    times: &[f64],
    tol: f64,
) -> Result<ConditioningReport, GpError> {
    let spec = ProcessSpec::HelixX;
    let k = standardized_matrix(&spec, times)?;
    let c = conditional_covariance(&spec, times, pivots)?;
    let multipliers: Vec<f64> = times.iter().map(|&t| helix_multiplier(t, pivots)).collect();
    Ok(report(&spec, pivots.to_vec(), times, multipliers, &c, &k, tol))
}

fn report(
    spec: &ProcessSpec,
    pivots: Vec<f64>,
    times: &[f64],
    multipliers: Vec<f64>,
    c: &DMatrix<f64>,
    k: &DMatrix<f64>,
    tol: f64,
) -> ConditioningReport {
    let n = times.len();
    let (mut signed, mut unsigned): (f64, f64) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let rhs = multipliers[i] * multipliers[j] * k[(i, j)];
            signed = signed.max((c[(i, j)] - rhs).abs());
            unsigned = unsigned.max((c[(i, j)].abs() - rhs.abs()).abs());
        }
    }
    ConditioningReport {
        process: spec.to_string(),
        pivots,
        times: times.to_vec(),
        multipliers,
        max_discrepancy: signed,
        max_abs_discrepancy: unsigned,
        tol,
        passed: unsigned <= tol,
        sign_consistent: signed <= tol,
    }
}

/// Sample paths: row `i` of `samples` is the `i`-th draw at `times`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePaths {
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    pub samples: DMatrix<f64>,
    pub seed: u64,
}

impl SamplePaths {
    pub fn n_samples(&self) -> usize {
        self.samples.nrows()
    }
}

/// `L` with `L L^T = K`, from the spectral decomposition with eigenvalues
/// in `[-tol, 0)` clamped to zero.
fn spectral_factor(k: &DMatrix<f64>) -> Result<DMatrix<f64>, GpError> {
    let n = k.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = k.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -tol::psd_threshold(tol::PSD, n, max) {
        return Err(GpError::NotPsd(min));
    }
    let mut l = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        l.column_mut(j).scale_mut(s);
    }
    Ok(l)
}

/// Draws `n` independent zero-mean Gaussian vectors with the covariance of
/// `spec` at `times`.
///
/// Sample `i` uses ChaCha8 stream `i` under key `seed`, so the output does
/// not depend on how the work is split across threads.
pub fn sample(spec: &ProcessSpec, times: &[f64], n: usize, seed: u64) -> Result<SamplePaths, GpError> {
    let k = kernel_matrix(spec, times)?;
    let labels = labels_for(spec, times)?;
    let l = spectral_factor(&k)?;
    let d = times.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            (0..d)
                .map(|r| (0..d).map(|c| l[(r, c)] * z[c]).sum())
                .collect()
        })
        .collect();
    let samples = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    Ok(SamplePaths {
        times: times.to_vec(),
        labels,
        samples,
        seed,
    })
}

/// Samples the unit-variance version of `spec` at `s0` and `times`, and
/// returns the residuals `Z(t) - K(t, s0) Z(s0)` at `times`. Their
/// covariance is the conditional covariance given `Z(s0) = 0`.
pub fn sample_conditioned(
    spec: &ProcessSpec,
    times: &[f64],
    s0: f64,
    n: usize,
    seed: u64,
) -> Result<SamplePaths, GpError> {
    let k0 = check_conditioning_point(spec, times, s0)?;
    let all: Vec<f64> = std::iter::once(s0).chain(times.iter().copied()).collect();
    let raw = sample(spec, &all, n, seed)?;
    let var0 = kernel_eval(spec, s0, s0)?;
    let d = times.len();
    let mut samples = DMatrix::zeros(n, d);
    for (j, &t) in times.iter().enumerate() {
        let sd = kernel_eval(spec, t, t)?.sqrt();
        for i in 0..n {
            let z0 = raw.samples[(i, 0)] / var0.sqrt();
            let zt = raw.samples[(i, j + 1)] / sd;
            samples[(i, j)] = zt - k0[j] * z0;
        }
    }
    Ok(SamplePaths {
        times: times.to_vec(),
        labels: labels_for(spec, times)?,
        samples,
        seed,
    })
}

/// Sample covariance with per-entry standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCovariance {
    pub n: usize,
    pub cov: DMatrix<f64>,
    /// Standard error of each entry: the sample standard deviation of the
    /// centered products divided by `sqrt(n)`.
    pub std_err: DMatrix<f64>,
}

impl EmpiricalCovariance {
    /// Largest `|cov - target| / std_err` over all entries. Entries with a
    /// zero standard error count as infinitely far unless they match exactly.
    pub fn max_z_score(&self, target: &DMatrix<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for (idx, &c) in self.cov.iter().enumerate() {
            let diff = (c - target[idx]).abs();
            let se = self.std_err[idx];
            let z = if diff == 0.0 {
                0.0
            } else if se == 0.0 {
                f64::INFINITY
            } else {
                diff / se
            };
            worst = worst.max(z);
        }
        worst
    }

    /// Every entry within `k` standard errors of `target`.
    pub fn within(&self, target: &DMatrix<f64>, k: f64) -> bool {
        self.max_z_score(target) <= k
    }
}

/// Unbiased sample covariance (mean-centered, divided by `n - 1`).
pub fn empirical_covariance(paths: &SamplePaths) -> Result<EmpiricalCovariance, GpError> {
    let n = paths.n_samples();
    if n < 2 {
        return Err(GpError::InsufficientSamples(n));
    }
    let d = paths.samples.ncols();
    let mean: Vec<f64> = (0..d).map(|j| paths.samples.column(j).mean()).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| paths.samples[(i, j)] - mean[j]);
    let mut cov = DMatrix::zeros(d, d);
    let mut std_err = DMatrix::zeros(d, d);
    let nf = n as f64;
    for a in 0..d {
        for b in a..d {
            let prods: Vec<f64> = (0..n).map(|i| centered[(i, a)] * centered[(i, b)]).collect();
            let sum: f64 = prods.iter().sum();
            let mean_prod = sum / nf;
            let var_prod = prods.iter().map(|p| (p - mean_prod).powi(2)).sum::<f64>() / (nf - 1.0);
            let c = sum / (nf - 1.0);
            let se = (var_prod / nf).sqrt();
            cov[(a, b)] = c;
            cov[(b, a)] = c;
            std_err[(a, b)] = se;
            std_err[(b, a)] = se;
        }
    }
    Ok(EmpiricalCovariance { n, cov, std_err })
}
