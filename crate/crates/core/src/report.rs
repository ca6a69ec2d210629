//! Rendering of result tables as CSV, aligned text or JSON lines.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::aggregation::{MethodSummary, Overhead, ParetoPoint};
use crate::analysis::{BinAxis, CorrelationCell, CorrelationTable, SweepPoint};
use crate::error::{Error, Result};
use crate::trace::ValidationReport;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ReportFormat {
    #[default]
    Csv,
    Text,
    Jsonl,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "text" | "text-table" | "table" => Ok(Self::Text),
            "jsonl" | "json" | "structured" => Ok(Self::Jsonl),
            other => Err(Error::Configuration(format!("unknown report format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Str(String),
    Int(i64),
    /// Fixed number of decimals.
    Num(f64, usize),
    /// Token counts: whole tokens, or thousands with one decimal.
    Tokens(f64),
    Bool(bool),
    Missing,
}

impl Value {
    fn text(&self, thousands: bool) -> String {
        match self {
            Value::Str(s) => s.clone(),
            Value::Int(i) => i.to_string(),
            Value::Num(x, p) => format!("{x:.p$}"),
            Value::Tokens(x) if thousands => format!("{:.1}k", x / 1000.0),
            Value::Tokens(x) => format!("{x:.0}"),
            Value::Bool(b) => b.to_string(),
            Value::Missing => String::new(),
        }
    }

    fn json(&self) -> String {
        match self {
            Value::Str(s) => serde_json::to_string(s).expect("string serializes"),
            Value::Num(x, _) | Value::Tokens(x) if !x.is_finite() => "null".into(),
            Value::Tokens(x) => format!("{x:.0}"),
            Value::Missing => "null".into(),
            other => other.text(false),
        }
    }

    fn is_numeric(&self) -> bool {
        matches!(self, Value::Int(_) | Value::Num(..) | Value::Tokens(_))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RenderOptions {
    /// Show token costs in thousands ("307.2k").
    pub thousands: bool,
}

/// Column-ordered rows plus notes shown only in text output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub notes: Vec<String>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: ReportFormat, options: RenderOptions) -> String {
        match format {
            ReportFormat::Csv => self.csv(options),
            ReportFormat::Text => self.text(options),
            ReportFormat::Jsonl => self.jsonl(),
        }
    }

    fn csv(&self, options: RenderOptions) -> String {
        let mut out = self.columns.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| csv_field(&v.text(options.thousands))).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    fn text(&self, options: RenderOptions) -> String {
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(|v| v.text(options.thousands)).collect())
            .collect();
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|i| {
                cells
                    .iter()
                    .map(|r| r[i].chars().count())
                    .chain([self.columns[i].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, items: &[String], numeric: &[bool]| {
            let parts: Vec<String> = items
                .iter()
                .zip(&widths)
                .zip(numeric)
                .map(|((s, &w), &num)| if num { format!("{s:>w$}") } else { format!("{s:<w$}") })
                .collect();
            out.push_str(parts.join("  ").trim_end());
            out.push('\n');
        };
        line(&mut out, &self.columns, &vec![false; self.columns.len()]);
        let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
        line(&mut out, &rule, &vec![false; widths.len()]);
        for (row, text) in self.rows.iter().zip(&cells) {
            let numeric: Vec<bool> = row.iter().map(Value::is_numeric).collect();
            line(&mut out, text, &numeric);
        }
        for note in &self.notes {
            let _ = writeln!(out, "# {note}");
        }
        out
    }

    fn jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let fields: Vec<String> = self
                .columns
                .iter()
                .zip(row)
                .map(|(c, v)| format!("{}:{}", serde_json::to_string(c).expect("string serializes"), v.json()))
                .collect();
            let _ = writeln!(out, "{{{}}}", fields.join(","));
        }
        out
    }
}

fn opt_num(x: Option<f64>, precision: usize) -> Value {
    x.map_or(Value::Missing, |x| Value::Num(x, precision))
}

fn opt_str(s: Option<&str>) -> Value {
    s.map_or(Value::Missing, |s| Value::Str(s.to_owned()))
}

fn correlation_row(table: &mut Table, c: &CorrelationCell) {
    table.push(vec![
        Value::Str(c.model_tag.clone()),
        Value::Str(c.dataset_tag.clone()),
        Value::Str(c.measure.name().into()),
        opt_num(c.pearson_r, 3),
        opt_str(c.category.map(|k| k.as_str())),
        Value::Int(c.records as i64),
        Value::Str(format!("{}/{}", c.seeds_used, c.seeds_total)),
        opt_str(c.flag.as_deref()),
    ]);
}

/// One row per `(model, dataset, measure)` followed by the average rows.
pub fn correlation_report(table: &CorrelationTable) -> Table {
    let mut t = Table::new(&[
        "model",
        "dataset",
        "measure",
        "pearson_r",
        "category",
        "records",
        "seeds",
        "flag",
    ]);
    for c in table.cells.iter().chain(&table.average) {
        correlation_row(&mut t, c);
    }
    let axis = match table.config.axis {
        BinAxis::MeanScore => "bin-mean score",
        BinAxis::BinIndex => "bin index",
    };
    t.notes.push(format!(
        "r is Pearson over {} (x = {axis}, y = bin accuracy) pairs; seed groups averaged per cell",
        table.config.num_bins
    ));
    t.notes
        .push(format!("settling: {}", table.config.settling.fingerprint()));
    t
}

pub fn sweep_report(points: &[SweepPoint]) -> Table {
    let mut t = Table::new(&["g", "rho", "mean_dtr", "pearson_r", "category", "flag"]);
    for p in points {
        t.push(vec![
            Value::Num(p.g, 3),
            Value::Num(p.rho, 3),
            Value::Num(p.mean_dtr, 6),
            opt_num(p.pearson_r, 3),
            opt_str(p.category.map(|k| k.as_str())),
            opt_str(p.flag.as_deref()),
        ]);
    }
    t
}

/// Method rows; accuracy in percent.
pub fn aggregate_report(rows: &[MethodSummary]) -> Table {
    let mut t = Table::new(&[
        "method",
        "n",
        "eta",
        "prefix_len",
        "accuracy",
        "mean_cost_tokens",
        "delta_vs_cons_percent",
        "model",
        "dataset",
        "overhead",
    ]);
    for r in rows {
        t.push(vec![
            Value::Str(r.method.name().into()),
            Value::Int(r.n as i64),
            Value::Num(r.eta, 2),
            Value::Int(r.prefix_len as i64),
            Value::Num(100.0 * r.accuracy, 2),
            Value::Tokens(r.mean_cost_tokens),
            opt_num(r.delta_vs_cons_percent, 1),
            Value::Str(r.model_id.clone()),
            Value::Str(r.dataset_tag.clone()),
            Value::Str(
                match r.overhead {
                    Overhead::Literal => "literal",
                    Overhead::Unselected => "unselected",
                }
                .into(),
            ),
        ]);
    }
    t.notes.push(
        "early-stopping overhead uses eta*n (literal); the unselected accounting uses (1-eta)*n, identical at eta = 0.5"
            .into(),
    );
    t
}

pub fn pareto_report(points: &[ParetoPoint]) -> Table {
    let mut t = Table::new(&[
        "method",
        "n",
        "eta",
        "prefix_len",
        "accuracy",
        "mean_cost_tokens",
        "on_frontier",
        "model",
        "dataset",
    ]);
    for p in points {
        t.push(vec![
            Value::Str(p.method.name().into()),
            Value::Int(p.n as i64),
            Value::Num(p.eta, 2),
            Value::Int(p.prefix_len as i64),
            Value::Num(100.0 * p.accuracy, 2),
            Value::Tokens(p.mean_cost_tokens),
            Value::Bool(p.on_frontier),
            Value::Str(p.model_id.clone()),
            Value::Str(p.dataset_tag.clone()),
        ]);
    }
    t
}

pub fn validation_report(reports: &[(String, ValidationReport)]) -> Table {
    let mut t = Table::new(&[
        "file",
        "records_total",
        "records_ok",
        "tokens",
        "spot_checked_tokens",
        "findings",
        "first_error",
    ]);
    for (name, r) in reports {
        t.push(vec![
            Value::Str(name.clone()),
            Value::Int(r.records_total as i64),
            Value::Int(r.records_ok as i64),
            Value::Int(r.tokens as i64),
            Value::Int(r.spot_checked_tokens as i64),
            Value::Int(r.findings.len() as i64),
            opt_str(r.first_error().map(|f| f.to_string()).as_deref()),
        ]);
        for f in &r.findings {
            t.notes.push(format!("{name}: {f}"));
        }
    }
    t
}
