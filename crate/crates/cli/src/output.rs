//! CSV emission with `#` provenance lines.

use anyhow::{Context, Result};
use fbl_core::bounds::BoundEstimate;
use std::io::Write;
use std::path::Path;

/// A CSV document: comment lines, a header row and records.
pub struct Table {
    comments: Vec<String>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { comments: Vec::new(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn comment(&mut self, line: impl Into<String>) {
        self.comments.push(line.into());
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        for c in &self.comments {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes to `path`, or to standard output when `path` is `None`.
    pub fn emit(&self, path: Option<&Path>) -> Result<()> {
        match path {
            Some(p) => {
                let f = std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
                self.write_to(std::io::BufWriter::new(f))
            }
            None => self.write_to(std::io::stdout().lock()),
        }
    }
}

pub fn num(x: f64) -> String {
    crate::config::fmt_f64(x)
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// `key=value` pairs of the estimate's diagnostics, `;`-separated.
pub fn diagnostics(est: &BoundEstimate) -> String {
    est.meta.iter().map(|(k, v)| format!("{k}={}", num(*v))).collect::<Vec<_>>().join(";")
}

/// `value, stderr, s_used, n_samples, diagnostics, error` for an outcome.
pub fn outcome_cells(result: &std::result::Result<BoundEstimate, String>) -> Vec<String> {
    match result {
        Ok(est) => vec![
            num(est.value),
            num(est.stderr),
            opt_num(est.s_used),
            est.n_samples.to_string(),
            diagnostics(est),
            String::new(),
        ],
        Err(e) => vec![String::new(), String::new(), String::new(), String::new(), String::new(), e.clone()],
    }
}

pub const OUTCOME_COLUMNS: [&str; 6] = ["value", "stderr", "s_used", "n_samples", "diagnostics", "error"];
