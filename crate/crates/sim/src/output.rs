//! Plot-ready tables and result files.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! value parsed back from a CSV cell is bit-identical to the one computed.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::OutputFormat;
use crate::error::{SimError, SimResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.to_string(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }
}

/// Formats a float for a CSV cell.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v}")
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Anything the CLI can write out.
pub trait Report: Serialize {
    fn tables(&self) -> Vec<Table>;
    fn pass(&self) -> bool;
}

fn write(path: &Path, contents: &str) -> SimResult<()> {
    fs::write(path, contents).map_err(|source| SimError::Io { path: path.display().to_string(), source })
}

/// Writes `report` under `dir`: one CSV per table, or `result.json`. When
/// `echo` is given it is written as `config.toml` next to the results.
pub fn write_report<R: Report>(
    report: &R,
    dir: &Path,
    format: OutputFormat,
    echo: Option<&str>,
) -> SimResult<Vec<String>> {
    fs::create_dir_all(dir).map_err(|source| SimError::Io { path: dir.display().to_string(), source })?;
    let mut written = Vec::new();
    match format {
        OutputFormat::Csv => {
            for t in report.tables() {
                let name = format!("{}.csv", t.name);
                write(&dir.join(&name), &t.to_csv())?;
                written.push(name);
            }
        }
        OutputFormat::Json => {
            write(&dir.join("result.json"), &to_json(report))?;
            written.push("result.json".into());
        }
    }
    if let Some(e) = echo {
        write(&dir.join("config.toml"), e)?;
        written.push("config.toml".into());
    }
    Ok(written)
}

pub fn to_json<R: Serialize>(report: &R) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("results serialize");
    s.push('\n');
    s
}

/// Renders `report` for stdout: every table, each preceded by `# name`, or
/// the JSON document.
pub fn render<R: Report>(report: &R, format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => {
            let mut out = String::new();
            for (k, t) in report.tables().iter().enumerate() {
                if k > 0 {
                    out.push('\n');
                }
                out.push_str(&format!("# {}\n", t.name));
                out.push_str(&t.to_csv());
            }
            out
        }
        OutputFormat::Json => to_json(report),
    }
}
