use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EvalReport, SubsetAccuracy};
use crate::error::{Error, Result};
use crate::io_util::write_atomic;

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

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::InvalidArgument(format!(
                "report format must be json or csv, got {s:?}"
            ))),
        }
    }
}

/// One CSV row: a clean-evaluation subset (`kind = "subset"`), a robustness
/// curve point (`"curve"`), or a subset of a curve point (`"curve_subset"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub kind: String,
    pub dataset: String,
    pub degradation: Option<String>,
    pub level: Option<String>,
    pub generator: Option<String>,
    pub real_acc: Option<f64>,
    pub fake_acc: Option<f64>,
    pub balanced_acc: Option<f64>,
    pub n_real: Option<usize>,
    pub n_fake: Option<usize>,
    pub macc: f64,
    pub threshold: f64,
}

fn subset_row(report: &EvalReport, kind: &str, s: &SubsetAccuracy, curve: Option<(&str, &str, f64)>) -> ReportRow {
    ReportRow {
        kind: kind.into(),
        dataset: report.dataset.clone(),
        degradation: curve.map(|c| c.0.to_string()),
        level: curve.map(|c| c.1.to_string()),
        generator: Some(s.generator.clone()),
        real_acc: Some(s.real_acc),
        fake_acc: Some(s.fake_acc),
        balanced_acc: Some(s.balanced_acc),
        n_real: Some(s.n_real),
        n_fake: Some(s.n_fake),
        macc: curve.map_or(report.macc, |c| c.2),
        threshold: report.threshold,
    }
}

fn csv_rows(report: &EvalReport) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = report
        .subsets
        .iter()
        .map(|s| subset_row(report, "subset", s, None))
        .collect();
    for p in &report.robustness {
        rows.push(ReportRow {
            kind: "curve".into(),
            dataset: report.dataset.clone(),
            degradation: Some(p.degradation.clone()),
            level: Some(p.level.clone()),
            generator: None,
            real_acc: None,
            fake_acc: None,
            balanced_acc: None,
            n_real: None,
            n_fake: None,
            macc: p.macc,
            threshold: report.threshold,
        });
        for s in &p.subsets {
            rows.push(subset_row(
                report,
                "curve_subset",
                s,
                Some((&p.degradation, &p.level, p.macc)),
            ));
        }
    }
    rows
}

pub fn emit_report(report: &EvalReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        ReportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(report).map_err(|e| Error::format("report", e.to_string()))?;
            v.push(b'\n');
            v
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in csv_rows(report) {
                w.serialize(row)
                    .map_err(|e| Error::format("report csv", e.to_string()))?;
            }
            w.into_inner().map_err(|e| Error::format("report csv", e.to_string()))?
        }
    };
    write_atomic(path, &bytes)
}

pub fn read_report_json(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn read_report_csv(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}
