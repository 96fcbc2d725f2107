//! Tabular run reports, one row per pipeline variant.
//!
//! Attitude columns are in degrees, position columns in meters; the
//! "mean ± std" rendering is left to whoever reads the file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineOutput;
use crate::{Error, Result};

/// Column order of CSV reports; also the key order of JSON rows.
pub const CSV_COLUMNS: [&str; 18] = [
    "variant",
    "n",
    "failures",
    "E",
    "e_q_deg_mean",
    "e_q_deg_std",
    "e_q_deg_median",
    "e_t_m_mean",
    "e_t_m_std",
    "e_t_m_median",
    "e_t_norm_mean",
    "e_t_norm_std",
    "e_t_norm_median",
    "fps",
    "detection_ms",
    "landmarks_ms",
    "pnp_ms",
    "total_ms",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub variant: String,
    /// Scored images.
    pub n: usize,
    pub failures: usize,
    #[serde(rename = "E")]
    pub score: f64,
    pub e_q_deg_mean: f64,
    pub e_q_deg_std: f64,
    pub e_q_deg_median: f64,
    pub e_t_m_mean: f64,
    pub e_t_m_std: f64,
    pub e_t_m_median: f64,
    pub e_t_norm_mean: f64,
    pub e_t_norm_std: f64,
    pub e_t_norm_median: f64,
    pub fps: Option<f64>,
    pub detection_ms: Option<f64>,
    pub landmarks_ms: Option<f64>,
    pub pnp_ms: Option<f64>,
    pub total_ms: Option<f64>,
}

impl ReportRow {
    /// Summarizes a run. Without `timing` the wall-clock columns are left
    /// empty, which makes reports from identical inputs byte-identical.
    pub fn from_output(variant: impl Into<String>, out: &PipelineOutput, timing: bool) -> Result<Self> {
        let agg = out
            .aggregate
            .as_ref()
            .ok_or_else(|| Error::invalid("no scored images to report"))?;
        let t = timing.then_some(out.timing);
        Ok(Self {
            variant: variant.into(),
            n: agg.n,
            failures: out.failures,
            score: agg.E(),
            e_q_deg_mean: agg.e_q_deg.mean,
            e_q_deg_std: agg.e_q_deg.std,
            e_q_deg_median: agg.e_q_deg.median,
            e_t_m_mean: agg.e_t.mean,
            e_t_m_std: agg.e_t.std,
            e_t_m_median: agg.e_t.median,
            e_t_norm_mean: agg.e_t_normalized.mean,
            e_t_norm_std: agg.e_t_normalized.std,
            e_t_norm_median: agg.e_t_normalized.median,
            fps: t.map(|t| t.fps),
            detection_ms: t.map(|t| t.detection_ms),
            landmarks_ms: t.map(|t| t.landmarks_ms),
            pnp_ms: t.map(|t| t.pnp_ms),
            total_ms: t.map(|t| t.total_ms),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Serialize, Deserialize)]
struct ReportFile {
    runs: Vec<ReportRow>,
}

/// Writes `rows` as `{"runs": [...]}` JSON or as CSV with [`CSV_COLUMNS`].
pub fn emit_report(rows: &[ReportRow], format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::invalid("report has no rows"));
    }
    let path = path.as_ref();
    let bytes = match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&ReportFile { runs: rows.to_vec() })?;
            s.push('\n');
            s.into_bytes()
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in rows {
                w.serialize(row)?;
            }
            w.into_inner().map_err(|e| Error::io(path, e.into_error()))?
        }
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a report written by [`emit_report`].
pub fn load_report(path: impl AsRef<Path>, format: ReportFormat) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        ReportFormat::Json => {
            let file: ReportFile =
                serde_json::from_str(&text).map_err(|e| Error::schema(None, "runs", e.to_string()))?;
            Ok(file.runs)
        }
        ReportFormat::Csv => {
            let mut r = csv::Reader::from_reader(text.as_bytes());
            let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
            if header != CSV_COLUMNS {
                return Err(Error::schema(None, "<header>", format!("unexpected columns {header:?}")));
            }
            Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
        }
    }
}
