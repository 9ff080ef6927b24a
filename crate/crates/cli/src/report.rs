//! Report assembly: plot-ready CSV tables, the summary JSON and the run
//! metadata file that holds everything nondeterministic.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use spine_core::signal::TimeSeries;

use crate::error::{CliError, CliResult};

/// Render a number with six significant digits.
pub fn fmt_sig(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{v:.5e}").parse().expect("formatted float parses");
    let a = rounded.abs();
    if (1e-4..1e15).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Flag(bool),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt_sig(*v),
            Cell::Int(i) => i.to_string(),
            Cell::Flag(b) => if *b { "1" } else { "0" }.into(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Flag(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// `t` followed by one column per channel.
    pub fn from_series(series: &TimeSeries) -> Self {
        let mut header = vec!["t".to_string()];
        if series.channels().len() == series.dim() {
            header.extend(series.channels().iter().cloned());
        } else {
            header.extend((0..series.dim()).map(|c| format!("c{c}")));
        }
        let mut table = Table::new(header);
        for (i, s) in series.samples().enumerate() {
            let mut row = vec![Cell::Num(series.time(i))];
            row.extend(s.iter().map(|v| Cell::Num(*v)));
            table.push(row);
        }
        table
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))
                .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// Warning with a machine-readable code.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Warning {
    pub code: &'static str,
    pub message: String,
}

impl Warning {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

/// Source and provenance of a coefficient or model file used by a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub kind: &'static str,
    /// File path, or `built-in`.
    pub source: String,
    pub provenance: String,
}

impl Provenance {
    pub fn new(kind: &'static str, path: Option<&Path>, provenance: &str) -> Self {
        Self {
            kind,
            source: path.map_or_else(|| "built-in".to_string(), |p| p.display().to_string()),
            provenance: provenance.to_string(),
        }
    }
}

/// Everything one input produced.
#[derive(Debug, Default)]
pub struct Analysis {
    pub files: Vec<(String, Vec<u8>)>,
    pub metrics: Value,
    pub warnings: Vec<Warning>,
}

impl Analysis {
    pub fn new(metrics: Value) -> Self {
        Self {
            metrics,
            ..Default::default()
        }
    }

    pub fn table(mut self, name: impl Into<String>, table: &Table) -> Self {
        self.files.push((name.into(), table.to_csv()));
        self
    }

    pub fn file(mut self, name: impl Into<String>, bytes: Vec<u8>) -> Self {
        self.files.push((name.into(), bytes));
        self
    }

    pub fn warn(&mut self, code: &'static str, message: impl Into<String>) {
        self.warnings.push(Warning::new(code, message));
    }
}

pub struct InputOutcome {
    pub input: String,
    pub result: CliResult<Analysis>,
}

/// Aggregated run report for one subcommand.
pub struct Report {
    pub command: String,
    pub settings: Value,
    pub provenance: Vec<Provenance>,
    pub outcomes: Vec<InputOutcome>,
    /// Run-level warnings not tied to one input.
    pub warnings: Vec<Warning>,
}

impl Report {
    pub fn new(command: &str, settings: Value) -> Self {
        Self {
            command: command.to_string(),
            settings,
            provenance: Vec::new(),
            outcomes: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn error_count(&self) -> usize {
        self.outcomes.iter().filter(|o| o.result.is_err()).count()
    }

    pub fn summary(&self) -> Value {
        let mut warnings: Vec<Value> = self
            .warnings
            .iter()
            .map(|w| json!({"code": w.code, "message": w.message, "input": Value::Null}))
            .collect();
        let mut errors = Vec::new();
        let inputs: Vec<Value> =
            self.outcomes
                .iter()
                .map(|o| match &o.result {
                    Ok(a) => {
                        warnings.extend(a.warnings.iter().map(
                            |w| json!({"code": w.code, "message": w.message, "input": o.input}),
                        ));
                        json!({
                            "input": o.input,
                            "status": "ok",
                            "outputs": a.files.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
                            "metrics": a.metrics,
                        })
                    }
                    Err(e) => {
                        let err =
                            json!({"code": e.code(), "message": e.to_string(), "input": o.input});
                        errors.push(err.clone());
                        json!({"input": o.input, "status": "error", "error": err})
                    }
                })
                .collect();
        json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "settings": self.settings,
            "provenance": self.provenance,
            "inputs": inputs,
            "warnings": warnings,
            "errors": errors,
        })
    }

    /// Write data files and `summary.json`; returns the paths written.
    pub fn write(&self, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
        std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
        let mut written = Vec::new();
        for o in &self.outcomes {
            if let Ok(a) = &o.result {
                for (name, bytes) in &a.files {
                    let p = out_dir.join(name);
                    std::fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
                    written.push(p);
                }
            }
        }
        let p = out_dir.join("summary.json");
        write_json(&p, &self.summary())?;
        written.push(p);
        Ok(written)
    }
}

pub fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Unique, filesystem-safe output stems for a list of inputs.
pub fn output_stems(inputs: &[PathBuf]) -> Vec<String> {
    let raw: Vec<String> = inputs
        .iter()
        .map(|p| {
            let s = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "input".into());
            s.chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                        c
                    } else {
                        '_'
                    }
                })
                .collect()
        })
        .collect();
    raw.iter()
        .enumerate()
        .map(|(i, s)| {
            if raw.iter().filter(|r| *r == s).count() > 1 {
                format!("{s}-{i}")
            } else {
                s.clone()
            }
        })
        .collect()
}

/// Min, max, mean and argmax of the finite values.
pub fn describe(values: &[f64]) -> Value {
    let finite: Vec<(usize, f64)> = values
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .collect();
    if finite.is_empty() {
        return json!({"count": 0});
    }
    let (argmax, max) =
        finite
            .iter()
            .copied()
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let min = finite.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let mean = finite.iter().map(|p| p.1).sum::<f64>() / finite.len() as f64;
    json!({"count": finite.len(), "min": min, "max": max, "mean": mean, "argmax": argmax})
}
