//! Numerical tolerances shared across the crate.
//!
//! All comparisons are done in `f64`; configurations are small (tens of
//! points), so these thresholds sit a few orders of magnitude above the
//! rounding noise of the operations that consume them.

use serde::{Deserialize, Serialize};

/// Allowed deviation of a unit vector's norm from 1.
pub const NORM: f64 = 1e-10;

/// Absolute tolerance on inner products in the projection-invariance check.
pub const INVARIANCE: f64 = 1e-8;

/// Absolute threshold below which an inner product counts as zero.
pub const ORTHOGONAL: f64 = 1e-9;

/// Relative PSD slack: eigenvalues down to `-PSD * n * max_eigenvalue` are
/// accepted and clamped to zero.
pub const PSD: f64 = 1e-9;

/// Relative tolerance (scaled by the diameter) for equalities between
/// distances in a finite metric space.
pub const METRIC_REL: f64 = 1e-9;

/// Structural symmetry / unit-diagonal slack when reading matrices.
pub const STRUCTURE: f64 = 1e-9;

/// Two labels are treated as the same projective point when
/// `|corr| >= 1 - DUPLICATE`.
pub const DUPLICATE: f64 = 1e-9;

/// The set of tolerances used by the classification pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub duplicate: f64,
    pub orthogonal: f64,
    pub psd: f64,
    pub metric_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            duplicate: DUPLICATE,
            orthogonal: ORTHOGONAL,
            psd: PSD,
            metric_rel: METRIC_REL,
        }
    }
}

/// PSD acceptance threshold for an `n x n` matrix whose largest eigenvalue
/// is `max_eig`.
pub fn psd_threshold(rel: f64, n: usize, max_eig: f64) -> f64 {
    rel * (n.max(1) as f64) * max_eig.abs().max(1.0)
}
