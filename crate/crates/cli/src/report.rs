//! Experiment reports and their CSV / JSON writers.

use crate::scenario::{Format, ScenarioFile};
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "PASS-EQUALITY")]
    PassEquality,
    #[serde(rename = "FAIL")]
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::PassEquality => "PASS-EQUALITY",
            Verdict::Fail => "FAIL",
        })
    }
}

/// How `left` is compared with `right`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// `left ≥ right − tolerance`
    AtLeast,
    /// `left ≤ right + tolerance`
    AtMost,
    /// `left − right ≥ tolerance`
    StrictlyAbove,
    /// `right − left ≥ tolerance`
    StrictlyBelow,
    /// `|left − right| ≤ tolerance`
    Equal,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::AtLeast => ">=",
            Relation::AtMost => "<=",
            Relation::StrictlyAbove => ">",
            Relation::StrictlyBelow => "<",
            Relation::Equal => "==",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub label: String,
    pub relation: Relation,
    /// `None` when the value could not be computed.
    pub left: Option<f64>,
    pub right: Option<f64>,
    pub tolerance: f64,
    /// Signed slack: positive means the claim holds with room to spare.
    pub margin: Option<f64>,
    pub verdict: Verdict,
}

impl Assertion {
    pub fn new(label: impl Into<String>, relation: Relation, left: Option<f64>, right: Option<f64>, tolerance: f64) -> Self {
        let margin = match (left, right) {
            (Some(l), Some(r)) if l.is_finite() && r.is_finite() => Some(match relation {
                Relation::AtLeast => l - r + tolerance,
                Relation::AtMost => r - l + tolerance,
                Relation::StrictlyAbove => l - r - tolerance,
                Relation::StrictlyBelow => r - l - tolerance,
                Relation::Equal => tolerance - (l - r).abs(),
            }),
            _ => None,
        };
        let verdict = match margin {
            Some(m) if m >= 0.0 && relation == Relation::Equal => Verdict::PassEquality,
            Some(m) if m >= 0.0 => Verdict::Pass,
            _ => Verdict::Fail,
        };
        Assertion {
            label: label.into(),
            relation,
            left,
            right,
            tolerance,
            margin,
            verdict,
        }
    }
}

/// One parameter point of a sweep. `values` follows the report's `columns`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub label: String,
    pub values: Vec<Option<f64>>,
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub experiment: String,
    pub inputs: ScenarioFile,
    /// Seed of randomized sweeps, if any.
    pub seed: Option<u64>,
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    pub assertions: Vec<Assertion>,
    pub notes: Vec<String>,
    pub seconds: f64,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.verdict != Verdict::Fail)
    }

    pub fn failures(&self) -> usize {
        self.assertions.iter().filter(|a| a.verdict == Verdict::Fail).count()
    }

    /// Value of `column` in the row labelled `row`.
    pub fn value(&self, row: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|c| c == column)?;
        self.rows.iter().find(|r| r.label == row)?.values.get(c).copied().flatten()
    }
}

fn fmt_value(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Rows as CSV: `label`, the report columns, `error`. Timing is left out so
/// identical inputs give identical bytes.
pub fn rows_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["label".to_string()];
    header.extend(report.columns.iter().cloned());
    header.push("error".into());
    w.write_record(&header)?;
    for r in &report.rows {
        let mut rec = vec![r.label.clone()];
        rec.extend(r.values.iter().map(|v| fmt_value(*v)));
        rec.push(r.error.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    Ok(w.into_inner()?)
}

pub fn assertions_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "relation", "left", "right", "tolerance", "margin", "verdict"])?;
    for a in &report.assertions {
        w.write_record([
            a.label.clone(),
            a.relation.symbol().to_string(),
            fmt_value(a.left),
            fmt_value(a.right),
            a.tolerance.to_string(),
            fmt_value(a.margin),
            a.verdict.to_string(),
        ])?;
    }
    Ok(w.into_inner()?)
}

/// Writes `<name>.csv` and `<name>.assertions.csv`, or `<name>.json`, into
/// `dir`. Returns the written paths.
pub fn write_report(report: &ExperimentReport, format: Format, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let stem = file_stem(&report.name);
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        written.push(p);
        Ok(())
    };
    match format {
        Format::Csv => {
            put(format!("{stem}.csv"), rows_csv(report)?)?;
            put(format!("{stem}.assertions.csv"), assertions_csv(report)?)?;
        }
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            put(format!("{stem}.json"), s.into_bytes())?;
        }
    }
    Ok(written)
}

pub fn read_json_report(path: &Path) -> Result<ExperimentReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Snapshot dump of a Cauchy run: `t,x_index,u`.
pub fn snapshots_csv(snapshots: &[(f64, Vec<f64>)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "x_index", "u"])?;
    for (t, u) in snapshots {
        for (i, v) in u.iter().enumerate() {
            w.write_record([t.to_string(), i.to_string(), v.to_string()])?;
        }
    }
    Ok(w.into_inner()?)
}

pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}
