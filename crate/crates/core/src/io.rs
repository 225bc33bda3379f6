//! File formats. Matrices are JSON objects carrying `"version": 1`; point
//! clouds, regions and sample paths are CSV.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::{rows_to_matrix, CorrelationError};
use crate::geometry::{Configuration, GeometryError, ProjectivePoint};
use crate::gp::SamplePaths;
use crate::metric::{FiniteMetricSpace, MetricError};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format version {0}, expected 1")]
    Version(u32),
    #[error("{0}")]
    Malformed(String),
    #[error(transparent)]
    Correlation(#[from] CorrelationError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Os(#[from] std::io::Error),
}

/// `{"version": 1, "labels": [...], "gram": [[...], ...]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GramFile {
    pub version: u32,
    pub labels: Vec<String>,
    pub gram: Vec<Vec<f64>>,
}

/// `{"version": 1, "labels": [...], "dist": [[...], ...]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricFile {
    pub version: u32,
    pub labels: Vec<String>,
    pub dist: Vec<Vec<f64>>,
}

fn check_version(v: u32) -> Result<(), IoError> {
    if v == FORMAT_VERSION {
        Ok(())
    } else {
        Err(IoError::Version(v))
    }
}

impl GramFile {
    pub fn new(labels: Vec<String>, gram: Vec<Vec<f64>>) -> Self {
        Self {
            version: FORMAT_VERSION,
            labels,
            gram,
        }
    }

    /// Square matrix with one label per row; no further validation.
    pub fn matrix(&self) -> Result<DMatrix<f64>, IoError> {
        let m = rows_to_matrix(&self.gram)?;
        if self.labels.len() != m.nrows() {
            return Err(CorrelationError::LabelCount {
                labels: self.labels.len(),
                size: m.nrows(),
            }
            .into());
        }
        Ok(m)
    }
}

impl MetricFile {
    pub fn new(labels: Vec<String>, dist: Vec<Vec<f64>>) -> Self {
        Self {
            version: FORMAT_VERSION,
            labels,
            dist,
        }
    }

    pub fn space(&self) -> Result<FiniteMetricSpace, IoError> {
        Ok(FiniteMetricSpace::from_rows(self.labels.clone(), &self.dist)?)
    }
}

pub fn parse_gram_file(text: &str) -> Result<GramFile, IoError> {
    let f: GramFile = serde_json::from_str(text)?;
    check_version(f.version)?;
    f.matrix()?;
    Ok(f)
}

pub fn parse_metric_file(text: &str) -> Result<MetricFile, IoError> {
    let f: MetricFile = serde_json::from_str(text)?;
    check_version(f.version)?;
    Ok(f)
}

/// Comma-separated finite reals, e.g. `0,0.5,-1e-3`.
pub fn parse_times(text: &str) -> Result<Vec<f64>, IoError> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|tok| {
            let tok = tok.trim();
            match tok.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(IoError::Malformed(format!("bad time {tok:?}"))),
            }
        })
        .collect()
}

/// Point cloud CSV: header `label,x1,x2,...`, one unit vector per row.
/// Rows are rescaled to unit length; zero rows are rejected.
pub fn parse_points_csv(text: &str) -> Result<Configuration, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let width = rdr
        .headers()
        .map_err(|e| IoError::Malformed(e.to_string()))?
        .len();
    if width < 2 {
        return Err(IoError::Malformed("need a label column and at least one coordinate".into()));
    }
    let mut labels = Vec::new();
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IoError::Malformed(e.to_string()))?;
        let label = rec[0].to_string();
        let coords = rec
            .iter()
            .skip(1)
            .map(|c| {
                c.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| IoError::Malformed(format!("bad coordinate {c:?} for {label:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        points.push(ProjectivePoint::from_coords(coords)?);
        labels.push(label);
    }
    Ok(Configuration::new(labels, points)?)
}

/// Any serializable report, stamped with the format version.
#[derive(Debug, Serialize)]
pub struct Versioned<T: Serialize> {
    pub version: u32,
    #[serde(flatten)]
    pub body: T,
}

pub fn versioned<T: Serialize>(body: T) -> Versioned<T> {
    Versioned {
        version: FORMAT_VERSION,
        body,
    }
}

/// Pretty JSON followed by a newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

/// `x,y` rows.
pub fn write_region_csv<W: Write>(points: &[(f64, f64)], out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y"]).map_err(csv_err)?;
    for (x, y) in points {
        w.write_record([x.to_string(), y.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Header is the time labels; one row per sample.
pub fn write_samples_csv<W: Write>(paths: &SamplePaths, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&paths.labels).map_err(csv_err)?;
    for row in paths.samples.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> IoError {
    IoError::Malformed(e.to_string())
}
