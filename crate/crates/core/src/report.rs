//! Structured (JSON) and plain-text table output.
//!
//! Correlations are shown ×100 with two decimals and scores with four.
//! JSON keeps raw values. Every artifact carries the tool version and the
//! run configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::ablation::{display_name, AblationRow};
use crate::calibration::CalibrationResult;
use crate::error::{Error, Result};
use crate::rank::BootstrapSummary;

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Structured,
    Table,
}

pub fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

pub fn fmt_score(v: f64) -> String {
    format!("{v:.4}")
}

pub fn fmt_weight(v: f64) -> String {
    format!("{v:.2}")
}

pub fn fmt_p(p: f64) -> String {
    if p != 0.0 && p < 1e-4 {
        format!("{p:.2e}")
    } else {
        format!("{p:.4}")
    }
}

/// `"58.40 ± 0.43, CI [57.60, 59.20]"`
pub fn format_bootstrap(s: &BootstrapSummary) -> String {
    format!(
        "{} ± {}, CI [{}, {}]",
        pct(s.mean),
        pct(s.std_dev),
        pct(s.ci_low),
        pct(s.ci_high)
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl TextTable {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        let mut row: Vec<String> = row.into_iter().map(Into::into).collect();
        row.resize(self.headers.len(), String::new());
        self.rows.push(row);
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    /// First column left-aligned, the rest right-aligned.
    pub fn render(&self) -> String {
        let widths: Vec<usize> = (0..self.headers.len())
            .map(|c| {
                std::iter::once(&self.headers[c])
                    .chain(self.rows.iter().map(|r| &r[c]))
                    .map(|s| s.chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| -> String {
            let mut out = String::new();
            for (c, cell) in cells.iter().enumerate() {
                if c > 0 {
                    out.push_str("  ");
                }
                let pad = widths[c] - cell.chars().count();
                if c == 0 {
                    out.push_str(cell);
                    out.extend(std::iter::repeat_n(' ', pad));
                } else {
                    out.extend(std::iter::repeat_n(' ', pad));
                    out.push_str(cell);
                }
            }
            out.trim_end().to_string()
        };
        let mut out = line(&self.headers);
        out.push('\n');
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        out.push_str(&rule.join("  "));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}

pub fn calibration_table(r: &CalibrationResult) -> TextTable {
    let mut t = TextTable::new(["channels", "α", "β", "γ", "λ", "τ (%)", "p", "n"]);
    let w = r.best;
    t.push([
        r.selection.iter().map(|c| display_name(*c)).collect::<Vec<_>>().join(" + "),
        fmt_weight(w.alpha()),
        fmt_weight(w.beta()),
        fmt_weight(w.gamma()),
        fmt_weight(w.lambda()),
        pct(r.best_tau),
        fmt_p(r.p_value),
        r.n.to_string(),
    ]);
    t
}

pub fn sensitivity_table(r: &CalibrationResult) -> TextTable {
    let mut t = TextTable::new(["perturbation", "weights", "τ (%)", "Δτ (%)"]);
    for e in &r.sensitivity.entries {
        t.push([e.perturbation.clone(), e.weights.to_string(), pct(e.tau), pct(e.delta)]);
    }
    t
}

pub fn grid_trace_table(r: &CalibrationResult) -> TextTable {
    let mut t = TextTable::new(["α", "β", "γ", "λ", "τ (%)"]);
    for p in &r.grid_trace {
        let w = p.weights;
        t.push([
            fmt_weight(w.alpha()),
            fmt_weight(w.beta()),
            fmt_weight(w.gamma()),
            fmt_weight(w.lambda()),
            pct(p.tau),
        ]);
    }
    t
}

pub fn bootstrap_table(rows: &[(String, BootstrapSummary)]) -> TextTable {
    let mut t = TextTable::new(["metric", "mean τ (%)", "std dev (%)", "95% CI"]);
    for (name, s) in rows {
        t.push([
            name.clone(),
            pct(s.mean),
            pct(s.std_dev),
            format!("[{}, {}]", pct(s.ci_low), pct(s.ci_high)),
        ]);
    }
    t
}

/// Strategy or sweep rows; `first` names the label column.
pub fn ablation_table(first: &str, rows: &[AblationRow]) -> TextTable {
    let mut t = TextTable::new([first, "α", "β", "γ", "λ", "τ (%)", "p", "std dev (%)"]);
    for r in rows {
        let w = r.weights;
        t.push([
            r.label.clone(),
            fmt_weight(w.alpha()),
            fmt_weight(w.beta()),
            fmt_weight(w.gamma()),
            fmt_weight(w.lambda()),
            pct(r.tau),
            fmt_p(r.p_value),
            r.std_dev.map(pct).unwrap_or_else(|| "-".into()),
        ]);
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub metric: String,
    pub mean: f64,
    pub tau: f64,
    pub p_value: f64,
}

pub fn metric_table(rows: &[MetricRow]) -> TextTable {
    let mut t = TextTable::new(["metric", "mean", "τ (%)", "p"]);
    for r in rows {
        t.push([r.metric.clone(), fmt_score(r.mean), pct(r.tau), fmt_p(r.p_value)]);
    }
    t
}

/// One command's output: a structured result plus titled tables.
#[derive(Debug, Clone)]
pub struct Report {
    pub name: String,
    pub config: Value,
    pub result: Value,
    pub tables: Vec<(String, TextTable)>,
}

#[derive(Serialize)]
struct Envelope<'a> {
    tool: &'a str,
    version: &'a str,
    config: &'a Value,
    result: &'a Value,
}

impl Report {
    pub fn new<T: Serialize>(name: impl Into<String>, config: Value, result: &T) -> Result<Self> {
        let result = serde_json::to_value(result).map_err(|e| Error::malformed("report", e.to_string()))?;
        Ok(Self {
            name: name.into(),
            config,
            result,
            tables: Vec::new(),
        })
    }

    pub fn with_table(mut self, title: impl Into<String>, table: TextTable) -> Self {
        self.tables.push((title.into(), table));
        self
    }

    pub fn structured(&self) -> String {
        let env = Envelope {
            tool: TOOL_NAME,
            version: TOOL_VERSION,
            config: &self.config,
            result: &self.result,
        };
        let mut s = serde_json::to_string_pretty(&env).expect("JSON values always serialize");
        s.push('\n');
        s
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {TOOL_NAME} {TOOL_VERSION}");
        let _ = writeln!(out, "# config: {}", self.config);
        for (title, table) in &self.tables {
            let _ = writeln!(out, "\n{title}\n");
            out.push_str(&table.render());
        }
        out
    }
}

/// Writes `<name>.json` and/or `<name>.txt` under `dir`, creating it.
pub fn emit_report(report: &Report, formats: &[ReportFormat], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for format in formats {
        let (ext, body) = match format {
            ReportFormat::Structured => ("json", report.structured()),
            ReportFormat::Table => ("txt", report.text()),
        };
        let path = dir.join(format!("{}.{ext}", report.name));
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
