//! The convergence table: one CSV row per adaptive iteration.

use crate::adaptive::RunRecord;
use crate::error::{Error, Result};

/// Column names, in order.
pub const HEADER: [&str; 14] = [
    "iter",
    "dofs",
    "eta_h",
    "eta1",
    "eta2",
    "eta3",
    "eta4",
    "eta5",
    "energy_error",
    "l2_error",
    "eff_index",
    "mu_h",
    "lambda_summary",
    "wall_ms",
];

/// Shortest representation that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Cells of one record. Error columns are empty without an exact solution;
/// `wall_ms` is empty unless `timing` is set, keeping repeat runs identical.
pub fn record_row(r: &RunRecord, timing: bool) -> Vec<String> {
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut row = vec![r.iteration.to_string(), r.dofs.to_string(), num(r.eta)];
    row.extend(r.eta_parts.iter().map(|&v| num(v)));
    row.push(opt(r.error.map(|e| e.energy_error)));
    row.push(opt(r.error.map(|e| e.l2_error)));
    row.push(opt(r.error.and_then(|e| e.efficiency_index)));
    row.push(num(r.mu));
    row.push(r.lambda_summary.clone());
    row.push(if timing { num(r.wall_ms) } else { String::new() });
    row
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn from_records(records: &[RunRecord], timing: bool) -> Self {
        Table {
            header: HEADER.iter().map(|s| s.to_string()).collect(),
            rows: records.iter().map(|r| record_row(r, timing)).collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = reader.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
        let rows = reader
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()).map_err(csv_error))
            .collect::<Result<_>>()?;
        Ok(Table { header, rows })
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("cells are UTF-8")
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Parsed numeric column; empty or unparsable cells become `None`.
    pub fn numeric(&self, name: &str) -> Vec<Option<f64>> {
        match self.column(name) {
            Some(c) => self.rows.iter().map(|r| r.get(c).and_then(|s| s.parse().ok())).collect(),
            None => vec![None; self.rows.len()],
        }
    }

    /// `(x, y)` pairs where both cells parse.
    pub fn pairs(&self, x: &str, y: &str) -> Vec<(f64, f64)> {
        self.numeric(x)
            .into_iter()
            .zip(self.numeric(y))
            .filter_map(|(a, b)| Some((a?, b?)))
            .collect()
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("malformed CSV: {e}"))
}
