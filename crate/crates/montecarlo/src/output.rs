//! CSV output: one record per (cell, test).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::CellResult;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRecord {
    pub table: String,
    pub dist: String,
    pub n: usize,
    pub beta: String,
    pub c: String,
    pub q: usize,
    pub test: String,
    pub rate: f64,
    pub se: f64,
    pub reps: usize,
    pub seed: u64,
}

pub fn records(cells: &[CellResult]) -> Vec<CsvRecord> {
    let mut out = Vec::new();
    for cell in cells {
        let d = &cell.design;
        for r in &cell.rates {
            out.push(CsvRecord {
                table: d.table.map(|t| t.to_string()).unwrap_or_default(),
                dist: d.dist.name().to_string(),
                n: d.n,
                beta: d.beta_label(),
                c: d.c_label(),
                q: d.q,
                test: r.test.name().to_string(),
                rate: r.rate,
                se: r.se,
                reps: r.reps,
                seed: d.base_seed,
            });
        }
    }
    out
}

/// Writes the header and one row per (cell, test).
pub fn write_csv<W: Write>(cells: &[CellResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rec in records(cells) {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}
