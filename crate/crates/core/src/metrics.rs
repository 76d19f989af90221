//! Confusion matrix, per-class precision/recall/F1 and report emission.
//!
//! Degenerate ratios (a 0/0 denominator) are reported as 0 so macro averages stay
//! defined. F1 is always computed as the harmonic mean of the row's own precision and
//! recall. Published tables that round F1 independently can disagree in the second
//! decimal: a class with P = 0.92 and R = 0.95 has F1 = 0.9348, i.e. 0.93, not 0.94.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    /// `counts[truth * classes + predicted]`
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_counts(rows: &[Vec<u64>]) -> Result<Self> {
        let classes = rows.len();
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::Shape("confusion matrix must be square".into()));
        }
        Ok(Self {
            classes,
            counts: rows.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn accumulate(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.classes || predicted >= self.classes {
            return Err(Error::Input(format!(
                "class pair ({truth}, {predicted}) outside {} classes",
                self.classes
            )));
        }
        self.counts[truth * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes.max(1)).map(<[u64]>::to_vec).collect()
    }
}

/// Fraction of correctly classified samples.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::UndefinedMetric("accuracy of an empty confusion matrix".into()));
    }
    Ok(cm.trace() as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReportRow {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when any of the three ratios hit a 0/0 denominator and was reported as 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn per_class(cm: &ConfusionMatrix, c: usize, name: impl Into<String>) -> ClassReportRow {
    let tp = cm.get(c, c);
    let predicted: u64 = (0..cm.classes()).map(|t| cm.get(t, c)).sum();
    let actual: u64 = (0..cm.classes()).map(|p| cm.get(c, p)).sum();
    let precision = ratio(tp, predicted);
    let recall = ratio(tp, actual);
    let (p, r) = (precision.unwrap_or(0.0), recall.unwrap_or(0.0));
    ClassReportRow {
        class: name.into(),
        precision: p,
        recall: r,
        f1: f1_score(p, r),
        support: actual,
        degenerate: precision.is_none() || recall.is_none() || p + r == 0.0,
    }
}

pub fn class_rows(cm: &ConfusionMatrix, names: &[String]) -> Vec<ClassReportRow> {
    (0..cm.classes())
        .map(|c| {
            let name = names.get(c).cloned().unwrap_or_else(|| format!("class{c}"));
            per_class(cm, c, name)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroAverage {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Unweighted mean of each column.
pub fn macro_average(rows: &[ClassReportRow]) -> Result<MacroAverage> {
    if rows.is_empty() {
        return Err(Error::Input("macro average of zero rows".into()));
    }
    let n = rows.len() as f64;
    Ok(MacroAverage {
        precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
        recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
        f1: rows.iter().map(|r| r.f1).sum::<f64>() / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Input(format!("unknown report format `{other}` (expected json or csv)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub classes: Vec<ClassReportRow>,
    #[serde(rename = "macro")]
    pub macro_avg: MacroAverage,
    pub accuracy: Option<f64>,
    pub confusion: Vec<Vec<u64>>,
}

/// CSV (`class,precision,recall,f1,support`, 4 decimals) or JSON with the raw matrix and
/// macro averages. Output depends only on the inputs.
pub fn emit_report(rows: &[ClassReportRow], cm: &ConfusionMatrix, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => {
            let mut out = String::from("class,precision,recall,f1,support\n");
            for r in rows {
                writeln!(out, "{},{:.4},{:.4},{:.4},{}", r.class, r.precision, r.recall, r.f1, r.support).expect("string write");
            }
            Ok(out)
        }
        ReportFormat::Json => {
            let report = Report {
                classes: rows.to_vec(),
                macro_avg: macro_average(rows)?,
                accuracy: accuracy(cm).ok(),
                confusion: cm.rows(),
            };
            Ok(serde_json::to_string_pretty(&report)? + "\n")
        }
    }
}
