//! Points of a finite-dimensional projective space, spherical projections
//! and the projection-invariance check on finite configurations.

use std::collections::HashSet;
use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::correlation::{CorrelationError, CorrelationMatrix};
use crate::tol;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("vector norm {0} is not 1")]
    NotUnit(f64),
    #[error("cannot normalize a zero or non-finite vector")]
    Degenerate,
    #[error("projection undefined: |<s0, y>| = {0} is within tolerance of 1")]
    ProjectionUndefined(f64),
    #[error("{labels} labels for {points} points")]
    LabelCount { labels: usize, points: usize },
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error(transparent)]
    Gram(#[from] CorrelationError),
}

/// A vector of Euclidean norm one.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Accepts `coords` only if its norm is 1 within [`tol::NORM`].
    pub fn new(coords: Vec<f64>) -> Result<Self, GeometryError> {
        let n = norm(&coords);
        if !n.is_finite() || (n - 1.0).abs() > tol::NORM {
            return Err(GeometryError::NotUnit(n));
        }
        Ok(Self(coords))
    }

    /// Rescales `coords` to unit length.
    pub fn normalized(mut coords: Vec<f64>) -> Result<Self, GeometryError> {
        let n = norm(&coords);
        if !n.is_finite() || n == 0.0 {
            return Err(GeometryError::Degenerate);
        }
        coords.iter_mut().for_each(|c| *c /= n);
        Ok(Self(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &UnitVector) -> Result<f64, GeometryError> {
        if self.dim() != other.dim() {
            return Err(GeometryError::DimensionMismatch(self.dim(), other.dim()));
        }
        Ok(dot(&self.0, &other.0))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// The class `±x` of a unit vector. The stored representative has its
/// first coordinate of magnitude above [`tol::NORM`] positive.
#[derive(Debug, Clone, Serialize)]
#[serde(transparent)]
pub struct ProjectivePoint {
    rep: UnitVector,
}

impl ProjectivePoint {
    pub fn new(v: UnitVector) -> Self {
        let flip = v
            .0
            .iter()
            .find(|c| c.abs() > tol::NORM)
            .is_some_and(|c| *c < 0.0);
        let rep = if flip {
            UnitVector(v.0.into_iter().map(|c| -c).collect())
        } else {
            v
        };
        Self { rep }
    }

    /// Normalizes `coords` and takes its class.
    pub fn from_coords(coords: Vec<f64>) -> Result<Self, GeometryError> {
        Ok(Self::new(UnitVector::normalized(coords)?))
    }

    pub fn rep(&self) -> &UnitVector {
        &self.rep
    }

    pub fn dim(&self) -> usize {
        self.rep.dim()
    }

    /// Inner product of the representatives. Only its absolute value is
    /// meaningful on projective points.
    pub fn inner(&self, other: &ProjectivePoint) -> Result<f64, GeometryError> {
        self.rep.dot(&other.rep)
    }

    /// Equality up to global sign, coordinatewise within `tol`.
    pub fn approx_eq(&self, other: &ProjectivePoint, tol: f64) -> bool {
        if self.dim() != other.dim() {
            return false;
        }
        let a = self.rep.coords();
        let b = other.rep.coords();
        let same = a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol);
        let opposite = a.iter().zip(b).all(|(x, y)| (x + y).abs() <= tol);
        same || opposite
    }
}

impl PartialEq for ProjectivePoint {
    fn eq(&self, other: &Self) -> bool {
        self.approx_eq(other, tol::NORM)
    }
}

/// Geodesic distance `arccos |<p, q>|`, in `[0, pi/2]`.
pub fn geodesic_distance(p: &ProjectivePoint, q: &ProjectivePoint) -> Result<f64, GeometryError> {
    Ok(p.inner(q)?.abs().min(1.0).acos())
}

/// Spherical projection of `y` to the hyperplane orthogonal to `s0`:
/// `(y - s0 <s0,y>) / sqrt(1 - <s0,y>^2)`.
///
/// The result keeps the ambient coordinates of the inputs.
pub fn spherical_project(
    s0: &ProjectivePoint,
    y: &ProjectivePoint,
) -> Result<ProjectivePoint, GeometryError> {
    spherical_project_with_tol(s0, y, tol::NORM)
}

/// [`spherical_project`] with an explicit coincidence tolerance: the
/// projection is undefined when `|<s0, y>| >= 1 - tol`.
pub fn spherical_project_with_tol(
    s0: &ProjectivePoint,
    y: &ProjectivePoint,
    tol: f64,
) -> Result<ProjectivePoint, GeometryError> {
    let c = s0.inner(y)?;
    if c.abs() >= 1.0 - tol {
        return Err(GeometryError::ProjectionUndefined(c.abs()));
    }
    let scale = (1.0 - c * c).sqrt();
    let coords = y
        .rep
        .coords()
        .iter()
        .zip(s0.rep.coords())
        .map(|(yi, si)| (yi - si * c) / scale)
        .collect();
    // renormalize to absorb rounding; the analytic norm is exactly 1
    ProjectivePoint::from_coords(coords)
}

/// Labeled finite set of projective points of a common dimension.
#[derive(Debug, Clone, Serialize)]
pub struct Configuration {
    labels: Vec<String>,
    points: Vec<ProjectivePoint>,
}

impl Configuration {
    pub fn new(labels: Vec<String>, points: Vec<ProjectivePoint>) -> Result<Self, GeometryError> {
        if labels.len() != points.len() {
            return Err(GeometryError::LabelCount {
                labels: labels.len(),
                points: points.len(),
            });
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(GeometryError::DuplicateLabel(l.clone()));
            }
        }
        if let Some(first) = points.first() {
            for p in &points {
                if p.dim() != first.dim() {
                    return Err(GeometryError::DimensionMismatch(first.dim(), p.dim()));
                }
            }
        }
        Ok(Self { labels, points })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn points(&self) -> &[ProjectivePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, ProjectivePoint::dim)
    }

    /// Gram matrix of the representatives. It is PSD by construction, so
    /// only the structural checks are applied.
    pub fn gram(&self) -> CorrelationMatrix {
        let n = self.len();
        let m = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else {
                dot(self.points[i].rep.coords(), self.points[j].rep.coords())
            }
        });
        CorrelationMatrix::new_unchecked_psd(self.labels.clone(), m)
            .expect("gram of unit vectors with unique labels is a correlation matrix")
    }
}

/// Realizes a correlation matrix as unit vectors via a clamped spectral
/// factorization `G = V diag(lambda) V^T`. Slightly negative eigenvalues
/// (within the PSD threshold) are dropped; positive ones are kept, largest
/// first.
pub fn embed_gram(gram: &CorrelationMatrix) -> Result<Configuration, GeometryError> {
    let n = gram.len();
    if n == 0 {
        return Ok(Configuration::new(Vec::new(), Vec::new())?);
    }
    let eig = gram.matrix().clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let threshold = tol::psd_threshold(tol::PSD, n, max);
    if min < -threshold {
        return Err(CorrelationError::NotPsd {
            min_eigenvalue: min,
            threshold,
        }
        .into());
    }
    let mut order: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > 0.0).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let columns: Vec<DVector<f64>> = order
        .iter()
        .map(|&k| {
            let mut v = eig.eigenvectors.column(k).into_owned();
            // deterministic eigenvector orientation
            if let Some(c) = v.iter().find(|c| c.abs() > tol::NORM) {
                if *c < 0.0 {
                    v.neg_mut();
                }
            }
            v * eig.eigenvalues[k].sqrt()
        })
        .collect();
    let points = (0..n)
        .map(|i| ProjectivePoint::from_coords(columns.iter().map(|c| c[i]).collect()))
        .collect::<Result<Vec<_>, _>>()?;
    Configuration::new(gram.labels().to_vec(), points)
}

/// Kind of a failed invariance check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// `| |<p(x), p(y)>| - |<x, y>| |` exceeds the tolerance.
    Discrepancy,
    /// One of the projections is undefined (a point coincides with `s0`).
    ProjectionUndefined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub s0: String,
    pub x: String,
    pub y: String,
    pub kind: ViolationKind,
    /// Absolute discrepancy of the inner products; infinite for undefined
    /// projections.
    #[serde(serialize_with = "serialize_discrepancy")]
    pub discrepancy: f64,
}

fn serialize_discrepancy<S: serde::Serializer>(d: &f64, s: S) -> Result<S::Ok, S::Error> {
    if d.is_finite() {
        s.serialize_f64(*d)
    } else {
        s.serialize_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub passed: bool,
    pub tol: f64,
    /// Number of `(s0, {x, y})` triples examined.
    pub checked: usize,
    /// Largest finite discrepancy seen.
    pub max_discrepancy: f64,
    pub violations: Vec<Violation>,
}

/// Checks, for every `s0` in the configuration and every unordered pair
/// `{x, y}` of the other points, that
/// `|<p_{s0}(x), p_{s0}(y)>| = |<x, y>|` within `tol`.
pub fn verify_projection_invariance(
    config: &Configuration,
    tol: f64,
) -> Result<InvarianceReport, GeometryError> {
    let n = config.len();
    if n < 3 {
        return Err(GeometryError::TooFewPoints(n));
    }
    let pts = config.points();
    let labels = config.labels();
    let mut violations = Vec::new();
    let mut max_discrepancy: f64 = 0.0;
    let mut checked = 0;
    for s in 0..n {
        let projected: Vec<Option<ProjectivePoint>> = (0..n)
            .map(|k| {
                if k == s {
                    None
                } else {
                    spherical_project(&pts[s], &pts[k]).ok()
                }
            })
            .collect();
        for x in 0..n {
            for y in (x + 1)..n {
                if x == s || y == s {
                    continue;
                }
                checked += 1;
                match (&projected[x], &projected[y]) {
                    (Some(px), Some(py)) => {
                        let lhs = px.inner(py)?.abs();
                        let rhs = pts[x].inner(&pts[y])?.abs();
                        let d = (lhs - rhs).abs();
                        max_discrepancy = max_discrepancy.max(d);
                        if d > tol {
                            violations.push(Violation {
                                s0: labels[s].clone(),
                                x: labels[x].clone(),
                                y: labels[y].clone(),
                                kind: ViolationKind::Discrepancy,
                                discrepancy: d,
                            });
                        }
                    }
                    _ => violations.push(Violation {
                        s0: labels[s].clone(),
                        x: labels[x].clone(),
                        y: labels[y].clone(),
                        kind: ViolationKind::ProjectionUndefined,
                        discrepancy: f64::INFINITY,
                    }),
                }
            }
        }
    }
    Ok(InvarianceReport {
        passed: violations.is_empty(),
        tol,
        checked,
        max_discrepancy,
        violations,
    })
}

/// `pi/2`, the distance between orthogonal points.
pub const ORTHOGONAL_DISTANCE: f64 = FRAC_PI_2;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::numbered_labels;

    fn pp(c: &[f64]) -> ProjectivePoint {
        ProjectivePoint::from_coords(c.to_vec()).unwrap()
    }

    fn sech(x: f64) -> f64 {
        1.0 / x.cosh()
    }

    #[test]
    fn canonical_representative() {
        let p = pp(&[0.0, -0.6, 0.8]);
        assert_eq!(p.rep().coords(), &[0.0, 0.6, -0.8]);
        assert_eq!(p, pp(&[0.0, 0.6, -0.8]));
        assert_ne!(p, pp(&[0.0, 0.6, 0.8]));
    }

    #[test]
    fn unit_vector_validation() {
        assert!(UnitVector::new(vec![1.0, 1.0]).is_err());
        assert!(UnitVector::new(vec![0.6, 0.8]).is_ok());
        assert_eq!(UnitVector::normalized(vec![0.0, 0.0]), Err(GeometryError::Degenerate));
    }

    #[test]
    fn distance_examples() {
        let e0 = pp(&[1.0, 0.0]);
        let e1 = pp(&[0.0, 1.0]);
        assert_eq!(geodesic_distance(&e0, &e0).unwrap(), 0.0);
        assert!((geodesic_distance(&e0, &e1).unwrap() - ORTHOGONAL_DISTANCE).abs() < 1e-15);
        // |<p,q>| = sech 1, reference value arccos(sech 1) from a 40-digit evaluation
        let c = sech(1.0);
        let q = pp(&[-c, (1.0 - c * c).sqrt()]);
        assert!((geodesic_distance(&e0, &q).unwrap() - 0.865_769_483_239_658_6).abs() < 1e-14);
        assert!(matches!(
            geodesic_distance(&e0, &pp(&[1.0, 0.0, 0.0])),
            Err(GeometryError::DimensionMismatch(2, 3))
        ));
    }

    #[test]
    fn projection_of_orthogonal_point_is_identity() {
        let s0 = pp(&[1.0, 0.0, 0.0]);
        let y = pp(&[0.0, 0.6, 0.8]);
        assert_eq!(spherical_project(&s0, &y).unwrap(), y);
    }

    #[test]
    fn projection_undefined_at_s0() {
        let s0 = pp(&[0.6, 0.8]);
        assert!(matches!(
            spherical_project(&s0, &s0),
            Err(GeometryError::ProjectionUndefined(_))
        ));
        let minus = pp(&[-0.6, -0.8]);
        assert!(spherical_project(&s0, &minus).is_err());
    }

    #[test]
    fn helix_projection_preserves_sech() {
        let psi = [0.0, 0.7, 1.9, -0.4];
        let n = psi.len();
        let g = DMatrix::from_fn(n, n, |i, j| sech(psi[i] - psi[j]));
        let gram = CorrelationMatrix::new(numbered_labels("h", n), g).unwrap();
        let conf = embed_gram(&gram).unwrap();
        let p = conf.points();
        let px = spherical_project(&p[0], &p[1]).unwrap();
        let py = spherical_project(&p[0], &p[2]).unwrap();
        assert!((px.inner(&py).unwrap().abs() - sech(0.7 - 1.9)).abs() < 1e-12);
        assert!(px.inner(&p[0]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn embed_identity_gives_orthonormal() {
        let gram = CorrelationMatrix::identity(numbered_labels("e", 3)).unwrap();
        let conf = embed_gram(&gram).unwrap();
        assert_eq!(conf.dim(), 3);
        for i in 0..3 {
            for j in 0..3 {
                let ip = conf.points()[i].inner(&conf.points()[j]).unwrap();
                assert!((ip - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn embed_two_points_at_sech_one() {
        let c = sech(1.0);
        let gram =
            CorrelationMatrix::from_rows(numbered_labels("e", 2), &[vec![1.0, c], vec![c, 1.0]])
                .unwrap();
        let conf = embed_gram(&gram).unwrap();
        assert_eq!(conf.dim(), 2);
        let d = geodesic_distance(&conf.points()[0], &conf.points()[1]).unwrap();
        assert!((d - c.acos()).abs() < 1e-14);
    }

    #[test]
    fn embed_rank_deficient() {
        let gram = CorrelationMatrix::from_rows(
            numbered_labels("e", 3),
            &[vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        )
        .unwrap();
        let conf = embed_gram(&gram).unwrap();
        assert_eq!(conf.dim(), 2);
        let back = conf.gram();
        assert!((back.matrix() - gram.matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn embed_rejects_non_psd() {
        let m = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { -0.9 });
        let gram = CorrelationMatrix::new_unchecked_psd(numbered_labels("e", 3), m).unwrap();
        assert!(matches!(
            embed_gram(&gram),
            Err(GeometryError::Gram(CorrelationError::NotPsd { .. }))
        ));
    }

    #[test]
    fn orthonormal_configuration_is_invariant() {
        let gram = CorrelationMatrix::identity(numbered_labels("e", 4)).unwrap();
        let r = verify_projection_invariance(&embed_gram(&gram).unwrap(), tol::INVARIANCE).unwrap();
        assert!(r.passed);
        assert_eq!(r.checked, 4 * 3);
    }

    #[test]
    fn perturbed_helix_is_not_invariant() {
        let psi = [0.0, 1.0, 2.0, 3.5];
        let mut g = DMatrix::from_fn(4, 4, |i, j| sech(psi[i] - psi[j]));
        g[(0, 2)] += 0.05;
        g[(2, 0)] += 0.05;
        let gram = CorrelationMatrix::new(numbered_labels("h", 4), g).unwrap();
        let r = verify_projection_invariance(&embed_gram(&gram).unwrap(), tol::INVARIANCE).unwrap();
        assert!(!r.passed);
        assert!(!r.violations.is_empty());
        assert!(r.max_discrepancy > 1e-3);
    }

    #[test]
    fn coincident_points_are_structural_violations() {
        let conf = Configuration::new(
            numbered_labels("c", 3),
            vec![pp(&[1.0, 0.0]), pp(&[-1.0, 0.0]), pp(&[0.6, 0.8])],
        )
        .unwrap();
        let r = verify_projection_invariance(&conf, tol::INVARIANCE).unwrap();
        assert!(!r.passed);
        assert!(r
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::ProjectionUndefined));
    }

    #[test]
    fn too_few_points() {
        let conf = Configuration::new(numbered_labels("c", 2), vec![pp(&[1.0, 0.0]), pp(&[0.0, 1.0])])
            .unwrap();
        assert_eq!(
            verify_projection_invariance(&conf, 1e-8).unwrap_err(),
            GeometryError::TooFewPoints(2)
        );
    }

    #[test]
    fn configuration_validation() {
        assert!(matches!(
            Configuration::new(vec!["a".into(), "a".into()], vec![pp(&[1.0]), pp(&[1.0])]),
            Err(GeometryError::DuplicateLabel(_))
        ));
        assert!(matches!(
            Configuration::new(vec!["a".into(), "b".into()], vec![pp(&[1.0]), pp(&[1.0, 0.0])]),
            Err(GeometryError::DimensionMismatch(1, 2))
        ));
    }
}
