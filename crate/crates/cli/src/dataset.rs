//! Numeric CSV input: comma separated, first row is the header, every cell a
//! finite number.

use std::fmt;
use std::path::Path;

use tdrr_core::nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub path: String,
    /// 1-based line in the file (the header is line 1).
    pub line: Option<usize>,
    pub column: Option<String>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path)?;
        if let Some(line) = self.line {
            write!(f, ", line {line}")?;
        }
        if let Some(col) = &self.column {
            write!(f, ", column `{col}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvDataset {
    pub headers: Vec<String>,
    /// One row per record.
    pub data: DMatrix<f64>,
}

impl CsvDataset {
    pub fn read(path: &Path) -> Result<Self, ParseError> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ParseError {
            path: name.clone(),
            line: None,
            column: None,
            message: e.to_string(),
        })?;
        Self::parse(&text, &name)
    }

    pub fn parse(text: &str, name: &str) -> Result<Self, ParseError> {
        let err = |line: Option<usize>, column: Option<String>, message: String| ParseError {
            path: name.to_string(),
            line,
            column,
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| err(Some(1), None, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(err(Some(1), None, "missing header row".into()));
        }
        let width = headers.len();
        let mut values = Vec::new();
        let mut rows = 0;
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map(|p| p.line() as usize);
                err(line, None, e.to_string())
            })?;
            let line = record.position().map(|p| p.line() as usize);
            if record.len() != width {
                return Err(err(
                    line,
                    None,
                    format!("expected {width} cells, found {}", record.len()),
                ));
            }
            for (cell, header) in record.iter().zip(&headers) {
                if cell.is_empty() {
                    return Err(err(line, Some(header.clone()), "missing value".into()));
                }
                let v: f64 = cell
                    .parse()
                    .map_err(|_| err(line, Some(header.clone()), format!("`{cell}` is not a number")))?;
                if !v.is_finite() {
                    return Err(err(line, Some(header.clone()), format!("`{cell}` is not finite")));
                }
                values.push(v);
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(err(None, None, "no data rows".into()));
        }
        Ok(Self {
            headers,
            data: DMatrix::from_row_slice(rows, width, &values),
        })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Splits off the named response column; the rest are covariates.
    pub fn split_response(&self, name: &str) -> Option<(DMatrix<f64>, Vec<f64>, Vec<String>)> {
        let k = self.column_index(name)?;
        let y = self.data.column(k).iter().copied().collect();
        let x = self.data.clone().remove_column(k);
        let names = self
            .headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .map(|(_, h)| h.clone())
            .collect();
        Some((x, y, names))
    }
}
