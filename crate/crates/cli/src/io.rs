//! Dataset CSV files and report output.
//!
//! Input files have a header naming the columns `y`, `x1..xp` and `z1..zq`
//! in any order; at least one instrument and two rows are required.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use ivtest::Dataset;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Serialize)]
pub struct InputInfo {
    pub path: String,
    pub fnv1a64: String,
    pub n: usize,
    pub p: usize,
    pub q: usize,
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub data: Dataset,
    pub info: InputInfo,
}

enum Slot {
    Y,
    X(usize),
    Z(usize),
}

fn classify(name: &str) -> Option<Slot> {
    if name == "y" {
        return Some(Slot::Y);
    }
    let index = |rest: &str| rest.parse::<usize>().ok().filter(|&k| k >= 1 && !rest.starts_with('0'));
    if let Some(rest) = name.strip_prefix('x') {
        return index(rest).map(|k| Slot::X(k - 1));
    }
    if let Some(rest) = name.strip_prefix('z') {
        return index(rest).map(|k| Slot::Z(k - 1));
    }
    None
}

fn check_contiguous(seen: &[bool], prefix: char) -> Result<()> {
    if let Some(k) = seen.iter().position(|s| !s) {
        bail!("column {prefix}{} is missing", k + 1);
    }
    Ok(())
}

/// Parses CSV text into a dataset. Rows are numbered from 1, the header
/// excluded.
pub fn parse_csv(bytes: &[u8]) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(bytes);
    let header = rdr.headers().context("reading the header row")?.clone();
    let mut slots = Vec::with_capacity(header.len());
    let (mut y_col, mut x_seen, mut z_seen) = (None, Vec::new(), Vec::new());
    for (col, name) in header.iter().enumerate() {
        let slot = classify(name).with_context(|| format!("unrecognised column {name:?}; expected y, x1.., z1.."))?;
        let dup = match slot {
            Slot::Y => y_col.replace(col).is_some(),
            Slot::X(k) | Slot::Z(k) => {
                let seen = if matches!(slot, Slot::X(_)) { &mut x_seen } else { &mut z_seen };
                if seen.len() <= k {
                    seen.resize(k + 1, false);
                }
                std::mem::replace(&mut seen[k], true)
            }
        };
        if dup {
            bail!("column {name:?} appears twice");
        }
        slots.push(slot);
    }
    if y_col.is_none() {
        bail!("missing required column y");
    }
    if z_seen.is_empty() {
        bail!("at least one instrument column z1 is required");
    }
    check_contiguous(&x_seen, 'x')?;
    check_contiguous(&z_seen, 'z')?;
    let (p, q) = (x_seen.len(), z_seen.len());
    let (mut y, mut x, mut z) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.with_context(|| format!("row {row}: malformed record"))?;
        if rec.len() != slots.len() {
            bail!("row {row}: expected {} fields, found {}", slots.len(), rec.len());
        }
        let (mut xr, mut zr) = (vec![0.0; p], vec![0.0; q]);
        for ((field, slot), name) in rec.iter().zip(&slots).zip(header.iter()) {
            let v: f64 = field
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .with_context(|| format!("row {row}: column {name} has non-numeric value {field:?}"))?;
            match *slot {
                Slot::Y => y.push(v),
                Slot::X(k) => xr[k] = v,
                Slot::Z(k) => zr[k] = v,
            }
        }
        x.extend(xr);
        z.extend(zr);
    }
    let n = y.len();
    if n < 2 {
        bail!("need at least 2 data rows, found {n}");
    }
    Ok(Dataset::new(DVector::from_vec(y), DMatrix::from_row_slice(n, p, &x), DMatrix::from_row_slice(n, q, &z))?)
}

pub fn load_csv(path: &Path) -> Result<LoadedData> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let data = parse_csv(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    let info = InputInfo {
        path: path.display().to_string(),
        fnv1a64: format!("{:016x}", fnv1a64(&bytes)),
        n: data.n(),
        p: data.p(),
        q: data.q(),
    };
    Ok(LoadedData { data, info })
}

/// Writes `y, x1..xp, z1..zq` with shortest round-trip number formatting.
pub fn write_dataset<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["y".to_string()];
    header.extend((1..=data.p()).map(|k| format!("x{k}")));
    header.extend((1..=data.q()).map(|k| format!("z{k}")));
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut row = vec![format!("{:?}", data.y()[i])];
        row.extend(data.x().row(i).iter().map(|v| format!("{v:?}")));
        row.extend(data.z().row(i).iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Standard output or a file.
pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}
