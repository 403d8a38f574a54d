use std::fmt;
use std::path::Path;

use serde::Serialize;

/// A failed command. Usage errors exit with 1, everything else with 2.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<ghostnet::Error> for CliError {
    fn from(e: ghostnet::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn runtime(msg: impl Into<String>) -> CliError {
    CliError::Runtime(msg.into())
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| runtime(format!("cannot read {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

/// Writes `text` to `path`, or to standard output when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> CliResult<String> {
    Ok(ghostnet::json::to_string(value)?)
}

/// Shortest round-trip decimal form; infinite Φ values print as "disjoint".
pub fn fmt_phi(v: f64) -> String {
    if v.is_infinite() {
        "disjoint".to_string()
    } else {
        v.to_string()
    }
}

/// Reads a numeric CSV file with a header row.
pub fn read_numeric_csv(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| runtime(format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|cell| {
                cell.parse::<f64>().map_err(|_| {
                    runtime(format!("{}: row {}: {cell:?} is not a number", path.display(), line + 1))
                })
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(runtime(format!("{} has no data rows", path.display())));
    }
    Ok((header, rows))
}

/// Builds CSV text from a header and rows of already formatted cells.
pub fn csv_text(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| runtime(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV cells are UTF-8"))
}
