//! Finite metric spaces satisfying the triangle equality: every triangle
//! is degenerate, i.e. its longest side is the sum of the other two.
//!
//! Such spaces embed isometrically into the real line, except for one
//! family of four-point spaces (the exceptional quadruples). This module
//! recognizes the property, builds the line embedding, and identifies the
//! exceptional quadruples.

use std::collections::{BTreeMap, HashSet};

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::tol;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("distance matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("{labels} labels for {size} points")]
    LabelCount { labels: usize, size: usize },
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("not a metric: {0}")]
    NotAMetric(String),
    #[error("triangle equality fails on ({}, {}, {})", .0[0], .0[1], .0[2])]
    NotTriangleEqual([String; 3]),
    #[error("points {0:?} and {1:?} coincide")]
    DegenerateQuadruple(String, String),
    #[error("expected 4 points, got {0}")]
    NotAQuadruple(usize),
    #[error("not embeddable in the line: ({}, {}, {}, {}) is an exceptional quadruple", .0[0], .0[1], .0[2], .0[3])]
    NotEmbeddable([String; 4]),
    #[error("invalid parameters x = {x}, y = {y}: need x > 0, y > 0, x != y")]
    InvalidParameters { x: f64, y: f64 },
}

/// Labeled finite metric space.
///
/// Coincident points (zero off-diagonal distance) are representable so that
/// operations can report them; all other metric axioms are enforced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteMetricSpace {
    labels: Vec<String>,
    #[serde(serialize_with = "serialize_rows")]
    dist: DMatrix<f64>,
}

fn serialize_rows<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    serde::Serialize::serialize(&rows, s)
}

impl FiniteMetricSpace {
    /// Validates symmetry, zero diagonal, nonnegativity and the triangle
    /// inequality (all relative to the diameter, with [`tol::METRIC_REL`]),
    /// then symmetrizes exactly.
    pub fn new(labels: Vec<String>, mut dist: DMatrix<f64>) -> Result<Self, MetricError> {
        let n = dist.nrows();
        if dist.ncols() != n {
            return Err(MetricError::NotSquare {
                rows: n,
                cols: dist.ncols(),
            });
        }
        if labels.len() != n {
            return Err(MetricError::LabelCount {
                labels: labels.len(),
                size: n,
            });
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(MetricError::DuplicateLabel(l.clone()));
            }
        }
        if let Some((i, j)) = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .find(|&(i, j)| !dist[(i, j)].is_finite())
        {
            return Err(MetricError::NotAMetric(format!("d({i}, {j}) is not finite")));
        }
        let diam = dist.iter().copied().fold(0.0, f64::max);
        let eps = tol::METRIC_REL * diam;
        for i in 0..n {
            if dist[(i, i)].abs() > eps {
                return Err(MetricError::NotAMetric(format!(
                    "d({0}, {0}) = {1} is not zero",
                    labels[i],
                    dist[(i, i)]
                )));
            }
            dist[(i, i)] = 0.0;
            for j in (i + 1)..n {
                let (a, b) = (dist[(i, j)], dist[(j, i)]);
                if a < -eps || b < -eps {
                    return Err(MetricError::NotAMetric(format!(
                        "negative distance between {} and {}",
                        labels[i], labels[j]
                    )));
                }
                if (a - b).abs() > eps {
                    return Err(MetricError::NotAMetric(format!(
                        "asymmetric distance between {} and {}",
                        labels[i], labels[j]
                    )));
                }
                let v = (0.5 * (a + b)).max(0.0);
                dist[(i, j)] = v;
                dist[(j, i)] = v;
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if dist[(i, k)] > dist[(i, j)] + dist[(j, k)] + eps {
                        return Err(MetricError::NotAMetric(format!(
                            "triangle inequality fails: d({a}, {c}) > d({a}, {b}) + d({b}, {c})",
                            a = labels[i],
                            b = labels[j],
                            c = labels[k]
                        )));
                    }
                }
            }
        }
        Ok(Self { labels, dist })
    }

    pub fn from_rows(labels: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, MetricError> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(MetricError::NotSquare {
                rows: n,
                cols: r.len(),
            });
        }
        Self::new(labels, DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// The subset `{ |p_i - p_j| }` of the real line.
    pub fn from_line(labels: Vec<String>, coords: &[f64]) -> Result<Self, MetricError> {
        let n = coords.len();
        Self::new(labels, DMatrix::from_fn(n, n, |i, j| (coords[i] - coords[j]).abs()))
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
        &self.dist
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dist[(i, j)]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }

    /// Sub-space on the given indices, in the given order.
    pub fn subspace(&self, indices: &[usize]) -> Self {
        let n = indices.len();
        Self {
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
            dist: DMatrix::from_fn(n, n, |a, b| self.dist[(indices[a], indices[b])]),
        }
    }

    /// All distances multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        assert!(factor > 0.0 && factor.is_finite(), "scale factor must be positive");
        Self {
            labels: self.labels.clone(),
            dist: &self.dist * factor,
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.dist
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    fn labels_of<const N: usize>(&self, idx: [usize; N]) -> [String; N] {
        idx.map(|i| self.labels[i].clone())
    }
}

/// Outcome of [`check_triangle_equality`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriangleEquality {
    pub holds: bool,
    /// One triple whose longest side differs from the sum of the other two.
    pub witness: Option<[String; 3]>,
}

fn triangle_equality_violation(m: &FiniteMetricSpace, tol_rel: f64) -> Option<[usize; 3]> {
    let n = m.len();
    let eps = tol_rel * m.diameter();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let mut s = [m.get(i, j), m.get(j, k), m.get(i, k)];
                s.sort_by(f64::total_cmp);
                if (s[2] - s[0] - s[1]).abs() > eps {
                    return Some([i, j, k]);
                }
            }
        }
    }
    None
}

/// Tests every triple for `max side = sum of the other two`, with tolerance
/// `tol_rel * diameter`.
pub fn check_triangle_equality(m: &FiniteMetricSpace, tol_rel: f64) -> TriangleEquality {
    match triangle_equality_violation(m, tol_rel) {
        None => TriangleEquality {
            holds: true,
            witness: None,
        },
        Some(t) => TriangleEquality {
            holds: false,
            witness: Some(m.labels_of(t)),
        },
    }
}

/// Isometric embedding into the real line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineEmbedding {
    /// Anchor pair realizing the diameter: `coords[anchor.0] = 0`,
    /// `coords[anchor.1] = diameter`.
    pub anchor: (String, String),
    pub coords: BTreeMap<String, f64>,
}

impl LineEmbedding {
    pub fn get(&self, label: &str) -> Option<f64> {
        self.coords.get(label).copied()
    }

    /// Largest `| |c(u) - c(v)| - d(u, v) |` over all pairs.
    pub fn isometry_error(&self, m: &FiniteMetricSpace) -> f64 {
        let mut err: f64 = 0.0;
        for i in 0..m.len() {
            for j in (i + 1)..m.len() {
                let (Some(a), Some(b)) = (self.get(&m.labels[i]), self.get(&m.labels[j])) else {
                    return f64::INFINITY;
                };
                err = err.max(((a - b).abs() - m.get(i, j)).abs());
            }
        }
        err
    }
}

/// Diameter pair, ties (within `eps`) broken by the lexicographically
/// smallest label pair. The returned pair is ordered by label.
fn anchor_pair(m: &FiniteMetricSpace, eps: f64) -> (usize, usize) {
    let diam = m.diameter();
    let mut best: Option<(usize, usize)> = None;
    for i in 0..m.len() {
        for j in 0..m.len() {
            if i == j || m.labels[i] > m.labels[j] || m.get(i, j) < diam - eps {
                continue;
            }
            let better = match best {
                None => true,
                Some((a, b)) => (&m.labels[i], &m.labels[j]) < (&m.labels[a], &m.labels[b]),
            };
            if better {
                best = Some((i, j));
            }
        }
    }
    best.expect("at least two points")
}

/// Places every point relative to the anchor pair and returns the first
/// pair of points whose distance is not reproduced, if any.
fn place_on_line(m: &FiniteMetricSpace, a: usize, b: usize, eps: f64) -> (Vec<f64>, Option<(usize, usize)>) {
    let n = m.len();
    let d_ab = m.get(a, b);
    let coords: Vec<f64> = (0..n)
        .map(|c| {
            if c == a {
                0.0
            } else if c == b {
                d_ab
            } else {
                // unique placement with phi(A) = 0, phi(B) = d(A, B)
                let r = m.get(a, c);
                let err_plus = ((r - d_ab).abs() - m.get(b, c)).abs();
                let err_minus = ((-r - d_ab).abs() - m.get(b, c)).abs();
                if err_plus <= err_minus {
                    r
                } else {
                    -r
                }
            }
        })
        .collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if ((coords[i] - coords[j]).abs() - m.get(i, j)).abs() > eps {
                return (coords, Some((i, j)));
            }
        }
    }
    (coords, None)
}

/// Isometric embedding into the line, anchored at the (label-ordered)
/// diameter pair `A, B` with `phi(A) = 0` and `phi(B) = d(A, B)`.
///
/// Fails with `NotTriangleEqual` if some triangle is not degenerate, and with
/// `NotEmbeddable` (carrying an exceptional quadruple) otherwise.
pub fn embed_line(m: &FiniteMetricSpace, tol_rel: f64) -> Result<LineEmbedding, MetricError> {
    if let Some(t) = triangle_equality_violation(m, tol_rel) {
        return Err(MetricError::NotTriangleEqual(m.labels_of(t)));
    }
    embed_line_unchecked(m, tol_rel)
}

fn embed_line_unchecked(m: &FiniteMetricSpace, tol_rel: f64) -> Result<LineEmbedding, MetricError> {
    match m.len() {
        0 => {
            return Ok(LineEmbedding {
                anchor: (String::new(), String::new()),
                coords: BTreeMap::new(),
            })
        }
        1 => {
            return Ok(LineEmbedding {
                anchor: (m.labels[0].clone(), m.labels[0].clone()),
                coords: BTreeMap::from([(m.labels[0].clone(), 0.0)]),
            })
        }
        _ => {}
    }
    let eps = tol_rel * m.diameter();
    let (a, b) = anchor_pair(m, eps);
    let (coords, failure) = place_on_line(m, a, b, eps);
    if let Some((i, j)) = failure {
        // the quadruple {A, B, i, j} cannot be classical
        return Err(MetricError::NotEmbeddable(m.labels_of([a, b, i, j])));
    }
    Ok(LineEmbedding {
        anchor: (m.labels[a].clone(), m.labels[b].clone()),
        coords: m.labels.iter().cloned().zip(coords).collect(),
    })
}

/// Opposite-pair structure of an exceptional quadruple.
///
/// With `A, B, C, D` as below the distances are `AB = CD = x`,
/// `AD = BC = y` and `AC = BD = x - y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadruplePairing {
    /// Labels playing the roles `A, B, C, D`.
    pub roles: [String; 4],
    pub x_pairs: [(String, String); 2],
    pub y_pairs: [(String, String); 2],
    pub diff_pairs: [(String, String); 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum QuadrupleClass {
    Classical,
    /// Canonical form: `x` is the largest pattern value and `y` the second
    /// largest, so `x > y >= x - y > 0`.
    Exceptional { x: f64, y: f64, pairing: QuadruplePairing },
}

/// The three perfect matchings of `{0, 1, 2, 3}`.
const MATCHINGS: [[(usize, usize); 2]; 3] = [[(0, 1), (2, 3)], [(0, 2), (1, 3)], [(0, 3), (1, 2)]];

/// Classical (line-embeddable) or exceptional. The embedding is attempted
/// first; the exceptional pattern is only matched when it fails.
pub fn classify_quadruple(m: &FiniteMetricSpace, tol_rel: f64) -> Result<QuadrupleClass, MetricError> {
    if m.len() != 4 {
        return Err(MetricError::NotAQuadruple(m.len()));
    }
    let eps = tol_rel * m.diameter();
    for i in 0..4 {
        for j in (i + 1)..4 {
            if m.get(i, j) <= eps {
                return Err(MetricError::DegenerateQuadruple(
                    m.labels[i].clone(),
                    m.labels[j].clone(),
                ));
            }
        }
    }
    if let Some(t) = triangle_equality_violation(m, tol_rel) {
        return Err(MetricError::NotTriangleEqual(m.labels_of(t)));
    }
    match embed_line_unchecked(m, tol_rel) {
        Ok(_) => return Ok(QuadrupleClass::Classical),
        Err(MetricError::NotEmbeddable(_)) => {}
        Err(e) => return Err(e),
    }
    // each matching must carry two equal distances
    let mut values = [(0.0, 0usize); 3];
    for (k, pairs) in MATCHINGS.iter().enumerate() {
        let d1 = m.get(pairs[0].0, pairs[0].1);
        let d2 = m.get(pairs[1].0, pairs[1].1);
        if (d1 - d2).abs() > eps {
            return Err(MetricError::NotEmbeddable(m.labels_of([0, 1, 2, 3])));
        }
        values[k] = (0.5 * (d1 + d2), k);
    }
    // descending by value; ties broken by matching index
    values.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let (x, mx) = values[0];
    let (y, my) = values[1];
    let (_, md) = values[2];
    // roles: A = 0, B = x-partner of A, D = y-partner of A, C = the rest
    let partner = |k: usize, p: usize| {
        MATCHINGS[k]
            .iter()
            .find_map(|&(u, v)| {
                if u == p {
                    Some(v)
                } else if v == p {
                    Some(u)
                } else {
                    None
                }
            })
            .expect("perfect matching covers every point")
    };
    let a = 0;
    let b = partner(mx, a);
    let d = partner(my, a);
    let c = (0..4).find(|&i| i != a && i != b && i != d).expect("four points");
    let l = |i: usize| m.labels[i].clone();
    Ok(QuadrupleClass::Exceptional {
        x,
        y,
        pairing: QuadruplePairing {
            roles: [l(a), l(b), l(c), l(d)],
            x_pairs: MATCHINGS[mx].map(|(u, v)| (l(u), l(v))),
            y_pairs: MATCHINGS[my].map(|(u, v)| (l(u), l(v))),
            diff_pairs: MATCHINGS[md].map(|(u, v)| (l(u), l(v))),
        },
    })
}

/// The exceptional four-point space on labels `A, B, C, D` with
/// `AB = CD = x`, `AD = BC = y`, `AC = BD = |x - y|`.
pub fn exceptional_quadruple(x: f64, y: f64) -> Result<FiniteMetricSpace, MetricError> {
    let valid = x.is_finite()
        && y.is_finite()
        && x > 0.0
        && y > 0.0
        && (x - y).abs() > tol::METRIC_REL * x.max(y);
    if !valid {
        return Err(MetricError::InvalidParameters { x, y });
    }
    let z = (x - y).abs();
    let rows = [
        [0.0, x, z, y],
        [x, 0.0, y, z],
        [z, y, 0.0, x],
        [y, z, x, 0.0],
    ];
    FiniteMetricSpace::new(
        ["A", "B", "C", "D"].map(String::from).to_vec(),
        DMatrix::from_fn(4, 4, |i, j| rows[i][j]),
    )
}
