//! Run reports in JSON and CSV.
//!
//! CSV layout is fixed: header `metric,fraction,value`. Scalar metrics leave
//! `fraction` empty; prediction-curve points use metric `curve` and the
//! observed fraction. The config echo is JSON-only.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{PredictionCurve, CURVE_POINTS};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 3] = ["metric", "fraction", "value"];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<PredictionCurve>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub config: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl Report {
    pub fn new() -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            ..Self::default()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::format("report", e))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Report = serde_json::from_str(text).map_err(|e| Error::format("report", e))?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::format("report", format!("unsupported schema_version {}", r.schema_version)));
        }
        Ok(r)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).map_err(|e| Error::format("report", e))?;
        for (name, value) in &self.metrics {
            w.write_record([name.as_str(), "", &value.to_string()])
                .map_err(|e| Error::format("report", e))?;
        }
        if let Some(curve) = &self.curve {
            for (f, a) in PredictionCurve::fractions().iter().zip(curve.accuracy.iter()) {
                w.write_record(["curve", &f.to_string(), &a.to_string()])
                    .map_err(|e| Error::format("report", e))?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::format("report", e))?;
        String::from_utf8(bytes).map_err(|e| Error::format("report", e))
    }

    /// Inverse of [`Report::to_csv`]; the config echo is not carried by CSV.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| Error::format("report", e))?;
        if header.iter().ne(CSV_HEADER) {
            return Err(Error::format("report", "unexpected CSV header"));
        }
        let mut report = Report::new();
        let mut points = Vec::new();
        for row in r.records() {
            let row = row.map_err(|e| Error::format("report", e))?;
            let value: f64 = row[2].parse().map_err(|e| Error::format("report", e))?;
            if &row[0] == "curve" {
                points.push(value);
            } else {
                report.metrics.insert(row[0].to_string(), value);
            }
        }
        if !points.is_empty() {
            let accuracy: [f64; CURVE_POINTS] = points
                .try_into()
                .map_err(|p: Vec<f64>| Error::format("report", format!("{} curve rows", p.len())))?;
            report.curve = Some(PredictionCurve { accuracy });
        }
        Ok(report)
    }

    pub fn render(&self, format: ReportFormat) -> Result<String> {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
        }
    }
}
