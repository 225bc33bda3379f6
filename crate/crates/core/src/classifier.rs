//! Classification of correlation matrices whose projective configuration is
//! invariant under spherical projections.
//!
//! The pipeline splits the labels into mutually orthogonal classes, fixes
//! signs inside each class so all correlations become positive, maps a
//! correlation `c` to the distance `arccosh(1/c)` and then recognizes the
//! resulting metric: a line (helix subset, with `psi` as coordinates) or an
//! exceptional quadruple.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, Matrix4};
use serde::Serialize;
use thiserror::Error;

use crate::correlation::{standardize, CorrelationError, CorrelationMatrix};
use crate::metric::{
    check_triangle_equality, classify_quadruple, embed_line, FiniteMetricSpace, MetricError,
    QuadrupleClass,
};
use crate::tol::{self, Tolerances};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error(transparent)]
    Correlation(#[from] CorrelationError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("correlation of {label:?} with the reference {reference:?} vanishes")]
    ZeroPivot { label: String, reference: String },
    #[error("correlation of {u:?} and {v:?} is {value} after sign adjustment, expected positive")]
    SignConflict { u: String, v: String, value: f64 },
    #[error("entry ({u:?}, {v:?}) = {value} is not positive")]
    NonPositiveEntry { u: String, v: String, value: f64 },
    #[error("(x, y) = ({x}, {y}) is not admissible")]
    NotAdmissible { x: f64, y: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

/// Result of merging labels that represent the same projective point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Collapsed {
    /// Matrix over the representative labels (input order preserved).
    pub matrix: CorrelationMatrix,
    /// Every input label mapped to its representative and the sign relating
    /// it to the representative.
    pub members: BTreeMap<String, CollapsedLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CollapsedLabel {
    pub representative: String,
    pub sign: i8,
}

/// Merges labels with `|corr| >= 1 - tol`. Labels are scanned in
/// lexicographic order and each unmerged label becomes the representative
/// of everything it coincides with.
pub fn collapse_duplicates(c: &CorrelationMatrix, tol: f64) -> Collapsed {
    let n = c.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| c.labels()[a].cmp(&c.labels()[b]));
    let mut assigned: Vec<Option<(usize, i8)>> = vec![None; n];
    for (pos, &i) in order.iter().enumerate() {
        if assigned[i].is_some() {
            continue;
        }
        assigned[i] = Some((i, 1));
        for &j in &order[pos + 1..] {
            let v = c.get(i, j);
            if assigned[j].is_none() && v.abs() >= 1.0 - tol {
                assigned[j] = Some((i, if v > 0.0 { 1 } else { -1 }));
            }
        }
    }
    let reps: Vec<usize> = (0..n).filter(|&i| assigned[i] == Some((i, 1))).collect();
    let members = (0..n)
        .map(|i| {
            let (r, sign) = assigned[i].expect("every label assigned");
            (
                c.labels()[i].clone(),
                CollapsedLabel {
                    representative: c.labels()[r].clone(),
                    sign,
                },
            )
        })
        .collect();
    Collapsed {
        matrix: c.submatrix(&reps),
        members,
    }
}

/// Intransitivity of the non-orthogonality relation: `u ~ w`, `w ~ v`, but
/// `u` is orthogonal to `v`. Impossible for invariant configurations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntransitiveChain {
    pub u: String,
    pub w: String,
    pub v: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    /// Each component sorted by label; components ordered by their smallest
    /// label.
    pub components: Vec<Vec<String>>,
    pub violations: Vec<IntransitiveChain>,
}

/// Connected components of the graph joining labels whose correlation
/// exceeds `tol_orth` in absolute value, plus every intransitive triple.
pub fn orthogonal_components(c: &CorrelationMatrix, tol_orth: f64) -> Partition {
    let n = c.len();
    let linked = |i: usize, j: usize| i != j && c.get(i, j).abs() > tol_orth;
    let mut comp = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = groups.len();
        let mut stack = vec![start];
        let mut members = Vec::new();
        comp[start] = id;
        while let Some(i) = stack.pop() {
            members.push(i);
            for j in 0..n {
                if comp[j] == usize::MAX && linked(i, j) {
                    comp[j] = id;
                    stack.push(j);
                }
            }
        }
        groups.push(members);
    }
    let label = |i: usize| c.labels()[i].clone();
    let mut violations = Vec::new();
    let mut reported = BTreeSet::new();
    let mut by_label: Vec<usize> = (0..n).collect();
    by_label.sort_by_key(|&i| label(i));
    for &w in &by_label {
        for &u in &by_label {
            for &v in &by_label {
                if label(u) < label(v)
                    && linked(u, w)
                    && linked(w, v)
                    && !linked(u, v)
                    && reported.insert((u, v))
                {
                    violations.push(IntransitiveChain {
                        u: label(u),
                        w: label(w),
                        v: label(v),
                    });
                }
            }
        }
    }
    let mut components: Vec<Vec<String>> = groups
        .into_iter()
        .map(|g| {
            let mut ls: Vec<String> = g.into_iter().map(label).collect();
            ls.sort();
            ls
        })
        .collect();
    components.sort();
    Partition {
        components,
        violations,
    }
}

/// Signs `a(u) = sign <u, s0>` making every correlation of the class
/// positive. Fails when a correlation with `s0` vanishes or when the
/// sign-adjusted matrix still has a non-positive entry.
pub fn recover_signs(
    c_class: &CorrelationMatrix,
    s0: &str,
    tol_orth: f64,
) -> Result<BTreeMap<String, i8>, ClassifierError> {
    let r = c_class
        .index_of(s0)
        .ok_or_else(|| ClassifierError::UnknownLabel(s0.to_string()))?;
    let n = c_class.len();
    let mut signs = vec![1i8; n];
    for u in 0..n {
        if u == r {
            continue;
        }
        let v = c_class.get(u, r);
        if v.abs() <= tol_orth {
            return Err(ClassifierError::ZeroPivot {
                label: c_class.labels()[u].clone(),
                reference: s0.to_string(),
            });
        }
        signs[u] = if v > 0.0 { 1 } else { -1 };
    }
    for u in 0..n {
        for v in (u + 1)..n {
            let adj = c_class.get(u, v) * f64::from(signs[u]) * f64::from(signs[v]);
            if adj <= tol_orth {
                return Err(ClassifierError::SignConflict {
                    u: c_class.labels()[u].clone(),
                    v: c_class.labels()[v].clone(),
                    value: adj,
                });
            }
        }
    }
    Ok(c_class.labels().iter().cloned().zip(signs).collect())
}

/// `d(u, v) = arccosh(1 / c(u, v))` on a matrix with positive entries.
pub fn gram_to_metric(c_pos: &CorrelationMatrix) -> Result<FiniteMetricSpace, ClassifierError> {
    let n = c_pos.len();
    for u in 0..n {
        for v in (u + 1)..n {
            let value = c_pos.get(u, v);
            if value <= 0.0 {
                return Err(ClassifierError::NonPositiveEntry {
                    u: c_pos.labels()[u].clone(),
                    v: c_pos.labels()[v].clone(),
                    value,
                });
            }
        }
    }
    let dist = DMatrix::from_fn(n, n, |u, v| {
        if u == v {
            0.0
        } else {
            (1.0 / c_pos.get(u, v).min(1.0)).acosh()
        }
    });
    Ok(FiniteMetricSpace::new(c_pos.labels().to_vec(), dist)?)
}

/// One orthogonal class of a classified configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ComponentReport {
    /// `entry(u, v) = a(u) a(v) sech(psi(u) - psi(v))`.
    Helix {
        labels: Vec<String>,
        psi: BTreeMap<String, f64>,
        signs: BTreeMap<String, i8>,
    },
    /// Exceptional quadruple; `roles` lists the labels taking the parts of
    /// `A, B, C, D`, so `entry(A, B) = a(A) a(B) sech x` etc.
    Quadruple {
        labels: Vec<String>,
        x: f64,
        y: f64,
        roles: [String; 4],
        signs: BTreeMap<String, i8>,
    },
    /// A class of one point. `sign` is 0 for a zero-variance input.
    Singleton { label: String, sign: i8 },
    /// A class the pipeline could not resolve; see the report diagnostics.
    Unresolved { labels: Vec<String> },
}

impl ComponentReport {
    pub fn labels(&self) -> Vec<String> {
        match self {
            Self::Helix { labels, .. }
            | Self::Quadruple { labels, .. }
            | Self::Unresolved { labels } => labels.clone(),
            Self::Singleton { label, .. } => vec![label.clone()],
        }
    }

    /// Correlation predicted by the component for two of its labels.
    pub fn predicted(&self, u: &str, v: &str) -> Option<f64> {
        if u == v {
            return Some(1.0);
        }
        match self {
            Self::Helix { psi, signs, .. } => {
                let s = f64::from(*signs.get(u)?) * f64::from(*signs.get(v)?);
                Some(s * sech(psi.get(u)? - psi.get(v)?))
            }
            Self::Quadruple {
                x, y, roles, signs, ..
            } => {
                let a = roles.iter().position(|r| r == u)?;
                let b = roles.iter().position(|r| r == v)?;
                let g = quadruple_pattern(*x, *y);
                Some(f64::from(*signs.get(u)?) * f64::from(*signs.get(v)?) * g[(a, b)])
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    IntransitiveChain { u: String, w: String, v: String },
    ZeroPivot { label: String, reference: String },
    SignConflict { u: String, v: String, value: f64 },
    NotAMetric { component: Vec<String>, message: String },
    TriangleEquality { triple: [String; 3] },
    NotEmbeddable { quadruple: [String; 4] },
    DegenerateQuadruple { u: String, v: String },
    InadmissibleQuadruple { labels: Vec<String>, x: f64, y: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Classified,
    NotInvariant { diagnostics: Vec<Diagnostic> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub status: Status,
    pub components: Vec<ComponentReport>,
    pub collapsed: BTreeMap<String, CollapsedLabel>,
}

impl ClassificationReport {
    pub fn is_classified(&self) -> bool {
        matches!(self.status, Status::Classified)
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        match &self.status {
            Status::Classified => &[],
            Status::NotInvariant { diagnostics } => diagnostics,
        }
    }
}

fn normalize_psi(labels: &[String], coords: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    // labels are sorted; orient so psi(second label) >= psi(first label)
    let flip = labels.len() >= 2 && coords[&labels[1]] < coords[&labels[0]];
    let oriented: Vec<(String, f64)> = labels
        .iter()
        .map(|l| (l.clone(), if flip { -coords[l] } else { coords[l] }))
        .collect();
    let min = oriented.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    oriented.into_iter().map(|(l, v)| (l, v - min)).collect()
}

fn metric_diagnostic(component: &[String], e: MetricError) -> Diagnostic {
    match e {
        MetricError::NotTriangleEqual(triple) => Diagnostic::TriangleEquality { triple },
        MetricError::NotEmbeddable(quadruple) => Diagnostic::NotEmbeddable { quadruple },
        MetricError::DegenerateQuadruple(u, v) => Diagnostic::DegenerateQuadruple { u, v },
        other => Diagnostic::NotAMetric {
            component: component.to_vec(),
            message: other.to_string(),
        },
    }
}

fn classify_component(
    c: &CorrelationMatrix,
    labels: &[String],
    tol: &Tolerances,
) -> Result<ComponentReport, Diagnostic> {
    if labels.len() == 1 {
        return Ok(ComponentReport::Singleton {
            label: labels[0].clone(),
            sign: 1,
        });
    }
    let class = c.restrict(labels).expect("component labels come from the matrix");
    let signs = recover_signs(&class, &labels[0], tol.orthogonal).map_err(|e| match e {
        ClassifierError::ZeroPivot { label, reference } => Diagnostic::ZeroPivot { label, reference },
        ClassifierError::SignConflict { u, v, value } => Diagnostic::SignConflict { u, v, value },
        other => Diagnostic::NotAMetric {
            component: labels.to_vec(),
            message: other.to_string(),
        },
    })?;
    let sign_vec: Vec<i8> = labels.iter().map(|l| signs[l]).collect();
    let positive = class.sign_conjugate(&sign_vec);
    let metric = gram_to_metric(&positive).map_err(|e| match e {
        ClassifierError::Metric(m) => metric_diagnostic(labels, m),
        other => Diagnostic::NotAMetric {
            component: labels.to_vec(),
            message: other.to_string(),
        },
    })?;
    let te = check_triangle_equality(&metric, tol.metric_rel);
    if let Some(triple) = te.witness {
        return Err(Diagnostic::TriangleEquality { triple });
    }
    match embed_line(&metric, tol.metric_rel) {
        Ok(embedding) => Ok(ComponentReport::Helix {
            labels: labels.to_vec(),
            psi: normalize_psi(labels, &embedding.coords),
            signs,
        }),
        Err(MetricError::NotEmbeddable(_)) if labels.len() == 4 => {
            match classify_quadruple(&metric, tol.metric_rel).map_err(|e| metric_diagnostic(labels, e))? {
                QuadrupleClass::Exceptional { x, y, pairing } => {
                    if !is_admissible_with(x, y, tol) {
                        return Err(Diagnostic::InadmissibleQuadruple {
                            labels: labels.to_vec(),
                            x,
                            y,
                        });
                    }
                    Ok(ComponentReport::Quadruple {
                        labels: labels.to_vec(),
                        x,
                        y,
                        roles: pairing.roles,
                        signs,
                    })
                }
                QuadrupleClass::Classical => unreachable!("embedding failed above"),
            }
        }
        Err(e) => Err(metric_diagnostic(labels, e)),
    }
}

/// Full pipeline: collapse duplicates, split into orthogonal classes and
/// classify each class as a helix subset or an admissible exceptional
/// quadruple. Failures are reported as diagnostics, never as errors.
pub fn classify(c: &CorrelationMatrix, tol: &Tolerances) -> ClassificationReport {
    let collapsed = collapse_duplicates(c, tol.duplicate);
    let partition = orthogonal_components(&collapsed.matrix, tol.orthogonal);
    let mut diagnostics: Vec<Diagnostic> = partition
        .violations
        .iter()
        .map(|v| Diagnostic::IntransitiveChain {
            u: v.u.clone(),
            w: v.w.clone(),
            v: v.v.clone(),
        })
        .collect();
    let mut components = Vec::with_capacity(partition.components.len());
    for labels in &partition.components {
        match classify_component(&collapsed.matrix, labels, tol) {
            Ok(r) => components.push(r),
            Err(d) => {
                diagnostics.push(d);
                components.push(ComponentReport::Unresolved {
                    labels: labels.clone(),
                });
            }
        }
    }
    let status = if diagnostics.is_empty() {
        Status::Classified
    } else {
        Status::NotInvariant { diagnostics }
    };
    ClassificationReport {
        status,
        components,
        collapsed: collapsed.members,
    }
}

/// Standardizes a raw covariance matrix and classifies it. Zero-variance
/// labels become singleton classes with sign 0.
pub fn classify_covariance(
    labels: Vec<String>,
    cov: DMatrix<f64>,
    tol: &Tolerances,
) -> Result<ClassificationReport, ClassifierError> {
    let std = standardize(labels, cov)?;
    let mut report = classify(&std.correlation, tol);
    for l in std.zero_variance {
        report.collapsed.insert(
            l.clone(),
            CollapsedLabel {
                representative: l.clone(),
                sign: 0,
            },
        );
        report.components.push(ComponentReport::Singleton { label: l, sign: 0 });
    }
    report
        .components
        .sort_by_key(|c| c.labels().into_iter().min().unwrap_or_default());
    Ok(report)
}

/// Closed-form spectrum of the exceptional-quadruple Gram matrix, in the
/// order `(1 + a + b + c, 1 + a - b - c, 1 - a + b - c, 1 - a - b + c)` with
/// `a = sech y`, `b = sech(x - y)`, `c = sech x`.
pub fn quadruple_eigenvalues(x: f64, y: f64) -> [f64; 4] {
    let a = sech(y);
    let b = sech(x - y);
    let c = sech(x);
    [
        1.0 + a + b + c,
        1.0 + a - b - c,
        1.0 - a + b - c,
        1.0 - a - b + c,
    ]
}

/// [`is_admissible_with`] at the default tolerances.
pub fn is_admissible(x: f64, y: f64) -> bool {
    is_admissible_with(x, y, &Tolerances::default())
}

/// `x, y > 0`, `x != y` and the quadruple Gram matrix is PSD.
pub fn is_admissible_with(x: f64, y: f64, tol: &Tolerances) -> bool {
    if !(x.is_finite() && y.is_finite() && x > 0.0 && y > 0.0) {
        return false;
    }
    if (x - y).abs() <= tol.metric_rel * x.max(y) {
        return false;
    }
    let l = quadruple_eigenvalues(x, y);
    let threshold = tol::psd_threshold(tol.psd, 4, l[0]);
    l[1..].iter().all(|&v| v >= -threshold)
}

/// Grid scan of `(0, xmax]^2` at spacing `step`; returns the admissible
/// points in lexicographic order. Both coordinates come from the same
/// `k * step` values, so the output is exactly symmetric.
pub fn admissible_region(xmax: f64, step: f64) -> Result<Vec<(f64, f64)>, ClassifierError> {
    if !(xmax.is_finite() && step.is_finite() && xmax > 0.0 && step > 0.0 && step < xmax) {
        return Err(ClassifierError::InvalidInput(format!(
            "need 0 < step < xmax, got xmax = {xmax}, step = {step}"
        )));
    }
    let count = (xmax / step + 1e-9).floor() as usize;
    let grid: Vec<f64> = (1..=count).map(|k| k as f64 * step).collect();
    let mut out = Vec::new();
    for &x in &grid {
        for &y in &grid {
            if is_admissible(x, y) {
                out.push((x, y));
            }
        }
    }
    Ok(out)
}

/// Unsigned exceptional-quadruple pattern on `A, B, C, D`:
/// `AB = CD = sech x`, `AD = BC = sech y`, `AC = BD = sech(x - y)`.
/// No admissibility check.
pub fn quadruple_pattern(x: f64, y: f64) -> Matrix4<f64> {
    let (a, b, c) = (sech(x), sech(y), sech(x - y));
    Matrix4::new(
        1.0, a, c, b, //
        a, 1.0, b, c, //
        c, b, 1.0, a, //
        b, c, a, 1.0,
    )
}

/// Labels `A, B, C, D`.
pub fn quadruple_labels() -> Vec<String> {
    ["A", "B", "C", "D"].map(String::from).to_vec()
}

/// Exceptional-quadruple Gram matrix conjugated by `signs`.
pub fn quadruple_gram(x: f64, y: f64, signs: [i8; 4]) -> Result<CorrelationMatrix, ClassifierError> {
    check_signs(&signs)?;
    if !is_admissible(x, y) {
        return Err(ClassifierError::NotAdmissible { x, y });
    }
    let g = quadruple_pattern(x, y);
    let m = DMatrix::from_fn(4, 4, |i, j| g[(i, j)] * f64::from(signs[i]) * f64::from(signs[j]));
    Ok(CorrelationMatrix::new(quadruple_labels(), m)?)
}

fn check_signs(signs: &[i8]) -> Result<(), ClassifierError> {
    match signs.iter().find(|s| s.abs() != 1) {
        Some(s) => Err(ClassifierError::InvalidInput(format!("sign {s} is not +1 or -1"))),
        None => Ok(()),
    }
}

/// `entry(u, v) = a(u) a(v) sech(psi(u) - psi(v))`.
pub fn helix_gram(
    labels: &[String],
    psi: &[f64],
    signs: &[i8],
) -> Result<CorrelationMatrix, ClassifierError> {
    if labels.len() != psi.len() || labels.len() != signs.len() {
        return Err(ClassifierError::InvalidInput(format!(
            "{} labels, {} times, {} signs",
            labels.len(),
            psi.len(),
            signs.len()
        )));
    }
    if let Some(p) = psi.iter().find(|p| !p.is_finite()) {
        return Err(ClassifierError::InvalidInput(format!("psi value {p} is not finite")));
    }
    check_signs(signs)?;
    let n = labels.len();
    let m = DMatrix::from_fn(n, n, |i, j| {
        f64::from(signs[i]) * f64::from(signs[j]) * sech(psi[i] - psi[j])
    });
    Ok(CorrelationMatrix::new(labels.to_vec(), m)?)
}
