//! Report emission. Every report is a JSON document or one or more CSV
//! tables separated by a blank line. Floats use fixed precision so output
//! is byte-stable.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    fn write_csv(&self, out: &mut Vec<u8>) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn fixed(v: f64) -> String {
    format!("{v:.6}")
}

/// Rounds to the CSV precision so JSON and CSV agree.
pub fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

pub fn render(format: Format, doc: &impl Serialize, tables: &[Table]) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_vec_pretty(doc)?;
            s.push(b'\n');
            Ok(s)
        }
        Format::Csv => {
            let mut out = Vec::new();
            for (i, t) in tables.iter().enumerate() {
                if i > 0 {
                    out.push(b'\n');
                }
                t.write_csv(&mut out)?;
            }
            Ok(out)
        }
    }
}

pub fn emit(bytes: &[u8], path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| CliError::io(p, e)),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}
