//! CSV ingestion for the design matrix and response.

use std::fs;
use std::path::Path;

use repro_core::Dataset;

use crate::CliError;

/// Parsed numeric table with an optional header row.
#[derive(Debug)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

fn parse_field(s: &str) -> Option<f64> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a comma-separated numeric table. A first row with any non-numeric
/// field is taken as the header; missing or non-numeric values elsewhere are
/// errors naming the 1-based row and column.
pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    parse_table(&text).map_err(|m| CliError::usage(format!("{}: {m}", path.display())))
}

pub fn parse_table(text: &str) -> Result<Table, String> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| format!("line {}: {e}", k + 1))?;
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let line = k + 1;
        if let Some(w) = width {
            if rec.len() != w {
                return Err(format!("row {line} has {} fields, expected {w}", rec.len()));
            }
        } else {
            width = Some(rec.len());
        }
        let parsed: Vec<Option<f64>> = rec.iter().map(parse_field).collect();
        if header.is_none() && rows.is_empty() && parsed.iter().any(Option::is_none) {
            if rec.iter().any(|f| f.trim().is_empty()) {
                return Err(format!("row {line} has an empty field"));
            }
            header = Some(rec.iter().map(|f| f.trim().to_string()).collect());
            continue;
        }
        let mut row = Vec::with_capacity(parsed.len());
        for (j, v) in parsed.into_iter().enumerate() {
            match v {
                Some(v) => row.push(v),
                None => {
                    return Err(format!("row {line}, column {}: '{}' is not a finite number", j + 1, rec[j].trim()))
                }
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("no data rows".into());
    }
    Ok(Table { header, rows })
}

/// Loads X and y; also returns the design's column names when it has a header.
pub fn load_dataset(x_path: &Path, y_path: &Path) -> Result<(Dataset, Option<Vec<String>>), CliError> {
    let x = read_table(x_path)?;
    let y = read_table(y_path)?;
    if y.rows[0].len() != 1 {
        return Err(CliError::usage(format!(
            "{}: response must have exactly one column, found {}",
            y_path.display(),
            y.rows[0].len()
        )));
    }
    let y: Vec<f64> = y.rows.into_iter().map(|r| r[0]).collect();
    let data = Dataset::from_rows(y, &x.rows)?;
    Ok((data, x.header))
}
