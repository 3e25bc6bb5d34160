//! Multivariate series tables, CSV I/O, standardization, chronological
//! splits and sliding windows.

mod standardize;
mod synth;
mod window;

pub use standardize::{standardize, StandardizeStats};
pub use synth::{synth, synth_with_components, SineComponent, SynthSpec, NOISE_STD};
pub use window::{split, windows, SplitSpec, Splits, Window, WindowDataset};

use std::path::Path;

use crate::error::{Result, TriformerError};

/// `T×N` observation matrix, time-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesTable {
    columns: Vec<String>,
    timestamps: Option<Vec<String>>,
    values: Vec<f64>,
    rows: usize,
}

impl SeriesTable {
    pub fn new(columns: Vec<String>, timestamps: Option<Vec<String>>, values: Vec<f64>) -> Result<Self> {
        let cols = columns.len();
        if cols == 0 {
            return Err(TriformerError::Data("table has no value columns".into()));
        }
        if !values.len().is_multiple_of(cols) {
            return Err(TriformerError::Data(format!(
                "{} values do not fill rows of {cols} columns",
                values.len()
            )));
        }
        let rows = values.len() / cols;
        if let Some(ts) = &timestamps {
            if ts.len() != rows {
                return Err(TriformerError::Data(format!(
                    "{} timestamps for {rows} rows",
                    ts.len()
                )));
            }
            if let Some(i) = ts.windows(2).position(|w| w[0] >= w[1]) {
                return Err(TriformerError::Data(format!(
                    "timestamps not strictly increasing at row {} ({} then {})",
                    i + 2,
                    ts[i],
                    ts[i + 1]
                )));
            }
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(TriformerError::Data(format!(
                "non-finite value at row {}, column {}",
                i / cols + 1,
                columns[i % cols]
            )));
        }
        Ok(SeriesTable {
            columns,
            timestamps,
            values,
            rows,
        })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    /// Row-major `T×N` values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_vars() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.n_vars();
        &self.values[row * n..(row + 1) * n]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.value(r, col)).collect()
    }

    /// Contiguous rows `[start, end)`.
    pub fn slice_rows(&self, start: usize, end: usize) -> SeriesTable {
        assert!(start <= end && end <= self.rows, "row range out of bounds");
        let n = self.n_vars();
        SeriesTable {
            columns: self.columns.clone(),
            timestamps: self.timestamps.as_ref().map(|ts| ts[start..end].to_vec()),
            values: self.values[start * n..end * n].to_vec(),
            rows: end - start,
        }
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> SeriesTable {
        debug_assert_eq!(values.len(), self.values.len());
        SeriesTable {
            columns: self.columns.clone(),
            timestamps: self.timestamps.clone(),
            values,
            rows: self.rows,
        }
    }
}

fn is_date_header(name: &str) -> bool {
    let lower = name.trim().to_ascii_lowercase();
    matches!(lower.as_str(), "date" | "datetime" | "time" | "timestamp") || lower.contains("date")
}

/// Reads a CSV with a header row. A leading date-like column becomes the
/// timestamps; every other column must be numeric. Rows in parse errors are
/// 1-based data rows (the header is not counted).
pub fn load_csv(path: &Path) -> Result<SeriesTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| TriformerError::Data(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| TriformerError::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(TriformerError::Data(format!("{} is empty", path.display())));
    }
    let has_dates = is_date_header(&headers[0]);
    let columns: Vec<String> = headers[usize::from(has_dates)..].to_vec();

    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| TriformerError::Data(format!("row {row}: {e}")))?;
        let mut fields = record.iter();
        if has_dates {
            timestamps.push(fields.next().unwrap_or_default().to_string());
        }
        for (column, cell) in columns.iter().zip(fields) {
            let v: f64 = cell.parse().map_err(|_| TriformerError::Parse {
                row,
                column: column.clone(),
                message: format!("{cell:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(TriformerError::Parse {
                    row,
                    column: column.clone(),
                    message: format!("{cell:?} is not finite"),
                });
            }
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(TriformerError::Data(format!("{} has no data rows", path.display())));
    }
    SeriesTable::new(columns, has_dates.then_some(timestamps), values)
}

/// Writes the table as CSV. Values use the shortest representation that
/// parses back to the identical `f64`.
pub fn save_csv(table: &SeriesTable, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| TriformerError::Data(format!("{}: {e}", path.display())))?;
    let wrap = |e: csv::Error| TriformerError::Data(format!("{}: {e}", path.display()));
    let mut header = Vec::new();
    if table.timestamps.is_some() {
        header.push("date".to_string());
    }
    header.extend(table.columns.iter().cloned());
    writer.write_record(&header).map_err(wrap)?;
    for r in 0..table.rows {
        let mut record = Vec::with_capacity(header.len());
        if let Some(ts) = &table.timestamps {
            record.push(ts[r].clone());
        }
        record.extend(table.row(r).iter().map(|v| v.to_string()));
        writer.write_record(&record).map_err(wrap)?;
    }
    writer.flush().map_err(|e| TriformerError::io(path, e))
}
