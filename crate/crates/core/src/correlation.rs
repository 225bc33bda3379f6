//! Correlation (unit-diagonal Gram) matrices with labels.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::tol;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrelationError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("{labels} labels for a {size}x{size} matrix")]
    LabelCount { labels: usize, size: usize },
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("entries ({row}, {col}) and ({col}, {row}) differ by {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },
    #[error("diagonal entry {index} is {value}, expected 1")]
    NotUnitDiagonal { index: usize, value: f64 },
    #[error("entry ({row}, {col}) = {value} exceeds 1 in absolute value")]
    OutOfRange { row: usize, col: usize, value: f64 },
    #[error("matrix is not positive semidefinite (eigenvalue {min_eigenvalue:e} below -{threshold:e})")]
    NotPsd { min_eigenvalue: f64, threshold: f64 },
    #[error("diagonal entry {index} is negative ({value})")]
    NegativeVariance { index: usize, value: f64 },
    #[error("label {label:?} has zero variance but covariance {value:e} with {other:?}")]
    ZeroVarianceCovariance {
        label: String,
        other: String,
        value: f64,
    },
}

/// Symmetric PSD matrix with unit diagonal and one label per row.
///
/// Construction normalizes the diagonal to exactly 1 and symmetrizes the
/// off-diagonal part, so downstream code may rely on exact symmetry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    labels: Vec<String>,
    #[serde(serialize_with = "serialize_rows")]
    entries: DMatrix<f64>,
}

fn serialize_rows<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    rows.serialize(s)
}

fn check_labels(labels: &[String], size: usize) -> Result<(), CorrelationError> {
    if labels.len() != size {
        return Err(CorrelationError::LabelCount {
            labels: labels.len(),
            size,
        });
    }
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(CorrelationError::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}

fn check_square_finite_symmetric(m: &DMatrix<f64>) -> Result<(), CorrelationError> {
    if m.nrows() != m.ncols() {
        return Err(CorrelationError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            if !m[(i, j)].is_finite() {
                return Err(CorrelationError::NonFinite { row: i, col: j });
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = (m[(i, j)] - m[(j, i)]).abs();
            let scale = m[(i, i)].abs().max(m[(j, j)].abs()).max(1.0);
            if diff > tol::STRUCTURE * scale {
                return Err(CorrelationError::NotSymmetric { row: i, col: j, diff });
            }
        }
    }
    Ok(())
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub(crate) fn eigen_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = m.clone().symmetric_eigenvalues();
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Returns `Err(NotPsd)` unless every eigenvalue is above
/// `-rel * n * max_eigenvalue`.
pub(crate) fn check_psd(m: &DMatrix<f64>, rel: f64) -> Result<(), CorrelationError> {
    let (min, max) = eigen_extremes(m);
    let threshold = tol::psd_threshold(rel, m.nrows(), max);
    if min < -threshold {
        return Err(CorrelationError::NotPsd {
            min_eigenvalue: min,
            threshold,
        });
    }
    Ok(())
}

impl CorrelationMatrix {
    /// Validates and normalizes a correlation matrix.
    pub fn new(labels: Vec<String>, entries: DMatrix<f64>) -> Result<Self, CorrelationError> {
        let m = Self::new_unchecked_psd(labels, entries)?;
        check_psd(&m.entries, tol::PSD)?;
        Ok(m)
    }

    /// Structural validation only (no eigenvalue check). Used internally
    /// where positive semidefiniteness holds by construction or is checked
    /// separately.
    pub(crate) fn new_unchecked_psd(
        labels: Vec<String>,
        mut entries: DMatrix<f64>,
    ) -> Result<Self, CorrelationError> {
        check_square_finite_symmetric(&entries)?;
        let n = entries.nrows();
        check_labels(&labels, n)?;
        for i in 0..n {
            let d = entries[(i, i)];
            if (d - 1.0).abs() > tol::STRUCTURE {
                return Err(CorrelationError::NotUnitDiagonal { index: i, value: d });
            }
            entries[(i, i)] = 1.0;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (entries[(i, j)] + entries[(j, i)]);
                if v.abs() > 1.0 + tol::STRUCTURE {
                    return Err(CorrelationError::OutOfRange {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
                let v = v.clamp(-1.0, 1.0);
                entries[(i, j)] = v;
                entries[(j, i)] = v;
            }
        }
        Ok(Self { labels, entries })
    }

    /// Builds a matrix from row-major nested vectors.
    pub fn from_rows(labels: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, CorrelationError> {
        Self::new(labels, rows_to_matrix(rows)?)
    }

    /// Identity matrix with the given labels.
    pub fn identity(labels: Vec<String>) -> Result<Self, CorrelationError> {
        let n = labels.len();
        Self::new(labels, DMatrix::identity(n, n))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Entry addressed by labels.
    pub fn entry(&self, u: &str, v: &str) -> Option<f64> {
        Some(self.get(self.index_of(u)?, self.index_of(v)?))
    }

    /// Principal submatrix on the given row indices, in the given order.
    pub fn submatrix(&self, indices: &[usize]) -> Self {
        let n = indices.len();
        let entries = DMatrix::from_fn(n, n, |i, j| self.entries[(indices[i], indices[j])]);
        let labels = indices.iter().map(|&i| self.labels[i].clone()).collect();
        Self { labels, entries }
    }

    /// Principal submatrix selected by label.
    pub fn restrict(&self, labels: &[String]) -> Option<Self> {
        let idx = labels
            .iter()
            .map(|l| self.index_of(l))
            .collect::<Option<Vec<_>>>()?;
        Some(self.submatrix(&idx))
    }

    /// Conjugates by a diagonal sign matrix: `entry(i,j) * s_i * s_j`.
    pub fn sign_conjugate(&self, signs: &[i8]) -> Self {
        assert_eq!(signs.len(), self.len(), "one sign per label");
        let mut out = self.clone();
        for i in 0..self.len() {
            for j in 0..self.len() {
                out.entries[(i, j)] *= f64::from(signs[i]) * f64::from(signs[j]);
            }
        }
        out
    }

    /// Block-diagonal assembly. Labels must be unique across all blocks.
    pub fn block_diagonal(blocks: &[CorrelationMatrix]) -> Result<Self, CorrelationError> {
        let n: usize = blocks.iter().map(|b| b.len()).sum();
        let mut entries = DMatrix::zeros(n, n);
        let mut labels = Vec::with_capacity(n);
        let mut offset = 0;
        for b in blocks {
            entries
                .view_mut((offset, offset), (b.len(), b.len()))
                .copy_from(&b.entries);
            labels.extend(b.labels.iter().cloned());
            offset += b.len();
        }
        check_labels(&labels, n)?;
        Ok(Self { labels, entries })
    }

    /// Reorders rows and columns so that row `k` of the result is row
    /// `order[k]` of `self`. Panics unless `order` is a permutation.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut seen = vec![false; self.len()];
        assert_eq!(order.len(), self.len(), "permutation length");
        for &i in order {
            assert!(!std::mem::replace(&mut seen[i], true), "not a permutation");
        }
        self.submatrix(order)
    }

    /// Row-major nested vectors, for serialization.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CorrelationError> {
    let n = rows.len();
    for r in rows {
        if r.len() != n {
            return Err(CorrelationError::NotSquare {
                rows: n,
                cols: r.len(),
            });
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Result of standardizing a raw covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    /// Correlation matrix over the labels with positive variance.
    pub correlation: CorrelationMatrix,
    /// Labels whose variance is zero; these carry no direction.
    pub zero_variance: Vec<String>,
}

/// Divides a covariance matrix by `sqrt(diag diag^T)`. Labels with zero
/// variance (within `tol::STRUCTURE` of the largest variance) are split off;
/// their covariances with everything else must vanish.
pub fn standardize(labels: Vec<String>, cov: DMatrix<f64>) -> Result<Standardized, CorrelationError> {
    check_square_finite_symmetric(&cov)?;
    let n = cov.nrows();
    check_labels(&labels, n)?;
    check_psd(&cov, tol::PSD)?;
    let max_var = (0..n).map(|i| cov[(i, i)]).fold(0.0, f64::max);
    let zero_tol = tol::STRUCTURE * max_var.max(f64::MIN_POSITIVE);
    let mut keep = Vec::new();
    let mut zero_variance = Vec::new();
    for i in 0..n {
        let v = cov[(i, i)];
        if v < -zero_tol {
            return Err(CorrelationError::NegativeVariance { index: i, value: v });
        }
        if v <= zero_tol {
            for j in 0..n {
                if j != i && cov[(i, j)].abs() > tol::STRUCTURE * max_var.max(1.0) {
                    return Err(CorrelationError::ZeroVarianceCovariance {
                        label: labels[i].clone(),
                        other: labels[j].clone(),
                        value: cov[(i, j)],
                    });
                }
            }
            zero_variance.push(labels[i].clone());
        } else {
            keep.push(i);
        }
    }
    let k = keep.len();
    let corr = DMatrix::from_fn(k, k, |a, b| {
        let (i, j) = (keep[a], keep[b]);
        if a == b {
            1.0
        } else {
            cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt()
        }
    });
    let kept_labels = keep.iter().map(|&i| labels[i].clone()).collect();
    Ok(Standardized {
        correlation: CorrelationMatrix::new(kept_labels, corr)?,
        zero_variance,
    })
}

/// `["x0", "x1", ...]`, handy for tests and synthetic matrices.
pub fn numbered_labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        numbered_labels("p", n)
    }

    #[test]
    fn rejects_structural_defects() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            CorrelationMatrix::new(labels(2), m),
            Err(CorrelationError::NotSymmetric { .. })
        ));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 0.9]);
        assert!(matches!(
            CorrelationMatrix::new(labels(2), m),
            Err(CorrelationError::NotUnitDiagonal { .. })
        ));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]);
        assert!(matches!(
            CorrelationMatrix::new(labels(2), m),
            Err(CorrelationError::OutOfRange { .. })
        ));
        let m = DMatrix::identity(2, 2);
        assert!(matches!(
            CorrelationMatrix::new(vec!["a".into(), "a".into()], m),
            Err(CorrelationError::DuplicateLabel(_))
        ));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 1.0]);
        assert!(matches!(
            CorrelationMatrix::new(labels(2), m),
            Err(CorrelationError::NonFinite { .. })
        ));
    }

    #[test]
    fn rejects_indefinite() {
        // pairwise correlation -0.9 between three variables is impossible
        let m = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { -0.9 });
        assert!(matches!(
            CorrelationMatrix::new(labels(3), m),
            Err(CorrelationError::NotPsd { .. })
        ));
    }

    #[test]
    fn normalizes_diagonal_and_symmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0 + 1e-12, 0.3, 0.3 + 1e-12, 1.0]);
        let c = CorrelationMatrix::new(labels(2), m).unwrap();
        assert_eq!(c.get(0, 0), 1.0);
        assert_eq!(c.get(0, 1), c.get(1, 0));
    }

    #[test]
    fn block_diagonal_and_restrict() {
        let a = CorrelationMatrix::from_rows(
            vec!["a".into(), "b".into()],
            &[vec![1.0, 0.5], vec![0.5, 1.0]],
        )
        .unwrap();
        let c = CorrelationMatrix::identity(vec!["c".into()]).unwrap();
        let m = CorrelationMatrix::block_diagonal(&[a.clone(), c]).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.entry("a", "c"), Some(0.0));
        assert_eq!(m.restrict(&["a".into(), "b".into()]).unwrap(), a);
        assert!(CorrelationMatrix::block_diagonal(&[a.clone(), a]).is_err());
    }

    #[test]
    fn standardize_splits_zero_variance() {
        let cov = DMatrix::from_row_slice(3, 3, &[4.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 9.0]);
        let s = standardize(labels(3), cov).unwrap();
        assert_eq!(s.zero_variance, vec!["p1".to_string()]);
        assert_eq!(s.correlation.labels(), &["p0".to_string(), "p2".to_string()]);
        assert!((s.correlation.get(0, 1) - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn sign_conjugation_flips_row_and_column() {
        let c = CorrelationMatrix::from_rows(
            labels(3),
            &[vec![1.0, 0.5, 0.2], vec![0.5, 1.0, 0.3], vec![0.2, 0.3, 1.0]],
        )
        .unwrap();
        let f = c.sign_conjugate(&[1, -1, 1]);
        assert_eq!(f.get(0, 1), -0.5);
        assert_eq!(f.get(1, 2), -0.3);
        assert_eq!(f.get(0, 2), 0.2);
        assert_eq!(f.get(1, 1), 1.0);
    }
}
