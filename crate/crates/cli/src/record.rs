//! Experiment records, result tables and crash-safe file output.

use std::fs;
use std::io::{ErrorKind, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tempfile::NamedTempFile;

use crate::error::{CliError, CliResult};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub version: String,
    pub subcommand: String,
    pub params: Value,
    /// Depends only on subcommand, params and seed.
    pub results: Value,
    pub runtime_seconds: f64,
    /// `None` when the run has nothing to converge or the check was skipped.
    pub converged: Option<bool>,
}

/// One row per point, for `--format csv` and plot data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        // writing to a Vec cannot fail
        w.write_record(&self.columns).unwrap();
        for row in &self.rows {
            w.write_record(row).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "jsonl")
}

fn temp_beside(path: &Path) -> CliResult<NamedTempFile> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    NamedTempFile::new_in(dir).map_err(CliError::io(dir))
}

fn commit(mut tmp: NamedTempFile, path: &Path) -> CliResult<()> {
    tmp.flush().map_err(CliError::io(path))?;
    tmp.as_file().sync_all().map_err(CliError::io(path))?;
    tmp.persist(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

/// Replaces `path` with `bytes` through a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let mut tmp = temp_beside(path)?;
    tmp.write_all(bytes).map_err(CliError::io(path))?;
    commit(tmp, path)
}

/// `.jsonl` targets get the record appended as one line (by rewriting the
/// file atomically); other targets are replaced by the pretty-printed record.
pub fn persist(record: &ExperimentRecord, path: &Path) -> CliResult<()> {
    let mut bytes = Vec::new();
    if is_jsonl(path) {
        match fs::read(path) {
            Ok(existing) => {
                bytes = existing;
                if !bytes.is_empty() && !bytes.ends_with(b"\n") {
                    bytes.push(b'\n');
                }
            }
            Err(e) if e.kind() == ErrorKind::NotFound => {}
            Err(e) => return Err(CliError::io(path)(e)),
        }
        serde_json::to_writer(&mut bytes, record).expect("records serialize");
    } else {
        serde_json::to_writer_pretty(&mut bytes, record).expect("records serialize");
    }
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Reads a `.jsonl` file, or a `.json` file holding one record or an array.
pub fn load_records(path: &Path) -> CliResult<Vec<ExperimentRecord>> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let bad = |e: serde_json::Error| CliError::Record {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    if is_jsonl(path) {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(bad))
            .collect()
    } else {
        match serde_json::from_str::<Value>(&text).map_err(bad)? {
            Value::Array(items) => items.into_iter().map(|v| serde_json::from_value(v).map_err(bad)).collect(),
            v => Ok(vec![serde_json::from_value(v).map_err(bad)?]),
        }
    }
}
