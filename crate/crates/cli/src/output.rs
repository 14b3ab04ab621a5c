//! Tables, JSON documents and atomic, no-clobber file emission.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::CliError;
use crate::options::{ExperimentSpec, Format};

pub const TOOL: &str = "wiener-coding";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(u64),
    Bool(bool),
    Text(&'static str),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Real(x) => real_text(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(t) => (*t).to_owned(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Real(x) => real_json(*x),
            Cell::Int(n) => json!(n),
            Cell::Bool(b) => json!(b),
            Cell::Text(t) => json!(t),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<u32> for Cell {
    fn from(n: u32) -> Self {
        Cell::Int(n.into())
    }
}

impl From<u64> for Cell {
    fn from(n: u64) -> Self {
        Cell::Int(n)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// Shortest text that parses back to the same `f64`; scientific notation
/// for very small or very large magnitudes.
pub fn real_text(x: f64) -> String {
    let m = x.abs();
    if m != 0.0 && m.is_finite() && !(1e-4..1e16).contains(&m) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

/// JSON has no infinities; they are written as strings.
pub fn real_json(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    fn json_rows(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = self
                        .columns
                        .iter()
                        .zip(row)
                        .map(|(c, v)| ((*c).to_owned(), v.json()))
                        .collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

fn spec_json(spec: &ExperimentSpec) -> Result<Value, CliError> {
    serde_json::to_value(spec).map_err(|e| CliError::Output(e.to_string()))
}

fn envelope(spec: &ExperimentSpec, key: &str, body: Value) -> Result<Value, CliError> {
    Ok(json!({
        "tool": TOOL,
        "version": env!("CARGO_PKG_VERSION"),
        "command": spec.command,
        "spec": spec_json(spec)?,
        key: body,
    }))
}

fn csv_bytes(
    header: Option<&str>,
    columns: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    if let Some(h) = header {
        writeln!(buf, "# spec: {h}").expect("write to Vec");
    }
    let mut w = csv::Writer::from_writer(buf);
    let err = |e: csv::Error| CliError::Output(e.to_string());
    w.write_record(columns).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Output(e.to_string()))
}

pub fn render_table(spec: &ExperimentSpec, table: &Table) -> Result<Vec<u8>, CliError> {
    match spec.format {
        Format::Csv => {
            let header = spec_json(spec)?.to_string();
            csv_bytes(
                Some(&header),
                &table.columns,
                table.rows.iter().map(|r| r.iter().map(Cell::csv).collect()),
            )
        }
        Format::Json => {
            let doc = envelope(spec, "rows", table.json_rows())?;
            Ok(pretty(&doc))
        }
    }
}

pub fn render_report(
    spec: &ExperimentSpec,
    report: Value,
    summary: &Table,
) -> Result<Vec<u8>, CliError> {
    match spec.format {
        Format::Json => Ok(pretty(&envelope(spec, "report", report)?)),
        Format::Csv => render_table(spec, summary),
    }
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("JSON values always serialize");
    out.push(b'\n');
    out
}

/// Plain CSV of serializable records (no spec line), e.g. the cycle log.
pub fn records_csv<T: Serialize>(records: &[T]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)
            .map_err(|e| CliError::Output(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Output(e.to_string()))
}

/// Fails early when `path` exists and overwriting was not requested.
pub fn ensure_writable(path: &Path, force: bool) -> Result<(), CliError> {
    if !force && path.exists() {
        return Err(CliError::Exists {
            path: path.to_owned(),
        });
    }
    let dir = parent_dir(path);
    if !dir.is_dir() {
        return Err(CliError::Io {
            path: dir,
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "directory does not exist"),
        });
    }
    Ok(())
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_owned(),
        _ => PathBuf::from("."),
    }
}

/// Writes to a temporary file next to `path` and renames it into place,
/// so a failed run leaves nothing behind.
pub fn write_atomic(path: &Path, bytes: &[u8], force: bool) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_owned(),
        source,
    };
    let mut tmp = tempfile::NamedTempFile::new_in(parent_dir(path)).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    let persisted = if force {
        tmp.persist(path)
    } else {
        tmp.persist_noclobber(path)
    };
    persisted.map(drop).map_err(|e| {
        if e.error.kind() == std::io::ErrorKind::AlreadyExists {
            CliError::Exists {
                path: path.to_owned(),
            }
        } else {
            io(e.error)
        }
    })
}

pub fn emit(path: Option<&Path>, bytes: &[u8], force: bool) -> Result<(), CliError> {
    match path {
        Some(p) => write_atomic(p, bytes, force),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|()| out.flush())
                .map_err(|source| CliError::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}
