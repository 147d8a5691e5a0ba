//! Machine-readable report output.
//!
//! JSON follows struct field order. CSV always starts with a header row and
//! writes floats in scientific notation with 17 significant digits, which is
//! enough to round-trip any `f64`.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::metrics::{MetricConfig, PairwiseMatrix};
use crate::norms::{DriftTrajectory, NormHistogram};
use crate::sweep::SweepResults;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    /// Picks CSV for a `.csv` extension and JSON otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

pub trait Report: Serialize {
    fn csv_header(&self) -> Vec<&'static str>;
    fn csv_rows(&self) -> Vec<Vec<String>>;
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn render<R: Report + ?Sized>(report: &R, format: ReportFormat) -> Result<Vec<u8>> {
    let to_err = |e: String| Error::InvalidParameter(format!("report serialization failed: {e}"));
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report).map_err(|e| to_err(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(report.csv_header()).map_err(|e| to_err(e.to_string()))?;
            for row in report.csv_rows() {
                w.write_record(&row).map_err(|e| to_err(e.to_string()))?;
            }
            w.into_inner().map_err(|e| to_err(e.to_string()))
        }
    }
}

pub fn emit_report<R: Report + ?Sized>(report: &R, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &render(report, format)?)
}

impl Report for DriftTrajectory {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["step", "norm_ratio", "cosine"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        (0..self.len())
            .map(|i| {
                vec![
                    self.steps[i].to_string(),
                    format_float(self.norm_ratio[i]),
                    format_float(self.cosine[i]),
                ]
            })
            .collect()
    }
}

impl Report for NormHistogram {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["bin_lower", "bin_upper", "count"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(b, c)| {
                vec![
                    format_float(self.bin_edges[b]),
                    format_float(self.bin_edges[b + 1]),
                    c.to_string(),
                ]
            })
            .collect()
    }
}

impl Report for SweepResults {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["alpha", "beta", "metric", "value"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.points
            .iter()
            .map(|p| {
                vec![
                    format_float(p.alpha),
                    format_float(p.beta),
                    p.metric.clone(),
                    format_float(p.value),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftCell {
    pub set_a: String,
    pub set_b: String,
    pub intra: bool,
    pub value: Option<f64>,
    pub n_p: Option<usize>,
    pub n_q: Option<usize>,
    pub notes: String,
}

/// Pairwise set distances, flattened to one cell per ordered pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub metric: String,
    pub config: MetricConfig,
    pub sets: Vec<String>,
    pub cells: Vec<DriftCell>,
}

impl DriftReport {
    /// `include_intra = false` leaves the diagonal out of the report.
    pub fn from_matrix(matrix: &PairwiseMatrix, names: &[String], include_intra: bool) -> Self {
        let mut cells = Vec::new();
        for (i, row) in matrix.rows().iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                if i == j && !include_intra {
                    continue;
                }
                let (value, n_p, n_q, notes) = match cell {
                    Ok(r) => (Some(r.value), Some(r.n_p), Some(r.n_q), r.notes.clone()),
                    Err(e) => (None, None, None, format!("error: {e}")),
                };
                cells.push(DriftCell {
                    set_a: names[i].clone(),
                    set_b: names[j].clone(),
                    intra: i == j,
                    value,
                    n_p,
                    n_q,
                    notes,
                });
            }
        }
        Self {
            metric: matrix.config.metric.name().to_string(),
            config: matrix.config,
            sets: names.to_vec(),
            cells,
        }
    }
}

impl Report for DriftReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["set_a", "set_b", "metric", "value", "notes"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.cells
            .iter()
            .map(|c| {
                vec![
                    c.set_a.clone(),
                    c.set_b.clone(),
                    self.metric.clone(),
                    c.value.map(format_float).unwrap_or_default(),
                    c.notes.clone(),
                ]
            })
            .collect()
    }
}
