//! CSV export and re-ingestion of sampled functions and point sets.
//!
//! Files have a header `x1,...,xn,value` and one row per point. Numbers are
//! written with 17 significant digits, which round-trips every `f64`.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use fif_core::{AttractorPoint, Lattice, SampledFunction};

use crate::error::{CliError, Result};

/// Relative tolerance when matching coordinates of a re-ingested file.
const COORD_TOLERANCE: f64 = 1e-12;

pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn header(dim: usize) -> Vec<String> {
    (1..=dim)
        .map(|k| format!("x{k}"))
        .chain(std::iter::once("value".to_string()))
        .collect()
}

fn csv_err(path: &Path, e: impl ToString) -> CliError {
    CliError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_rows<W: Write>(
    out: W,
    dim: usize,
    rows: impl Iterator<Item = (Vec<f64>, f64)>,
) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(header(dim))?;
    let mut record = Vec::with_capacity(dim + 1);
    for (x, v) in rows {
        record.clear();
        record.extend(x.iter().map(|c| format_value(*c)));
        record.push(format_value(v));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes lattice samples in row-major lattice order.
pub fn write_samples<W: Write>(out: W, s: &SampledFunction) -> std::result::Result<(), csv::Error> {
    let lattice = s.lattice();
    write_rows(
        out,
        lattice.dim(),
        (0..lattice.len()).map(|p| (lattice.point(p), s.values()[p])),
    )
}

/// Writes points `(X, y)` in the given order.
pub fn write_points<W: Write>(
    out: W,
    dim: usize,
    points: &[AttractorPoint],
) -> std::result::Result<(), csv::Error> {
    write_rows(out, dim, points.iter().map(|p| (p.x.clone(), p.y)))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| CliError::io(path, e))
}

pub fn save_samples(path: &Path, s: &SampledFunction) -> Result<()> {
    write_samples(create(path)?, s).map_err(|e| csv_err(path, e))
}

pub fn save_points(path: &Path, dim: usize, points: &[AttractorPoint]) -> Result<()> {
    write_points(create(path)?, dim, points).map_err(|e| csv_err(path, e))
}

/// Reads a file written by [`save_samples`] back onto `lattice`, checking the
/// header, row count and coordinates.
pub fn read_samples(path: &Path, lattice: Arc<Lattice>) -> Result<SampledFunction> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let dim = lattice.dim();
    let got: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if got != header(dim) {
        return Err(csv_err(
            path,
            format!(
                "header {:?} does not match {:?}",
                got.join(","),
                header(dim).join(",")
            ),
        ));
    }
    let mut values = Vec::with_capacity(lattice.len());
    for (row, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if row >= lattice.len() {
            return Err(csv_err(path, format!("more than {} rows", lattice.len())));
        }
        let nums = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| csv_err(path, format!("row {}: {e}", row + 1)))?;
        let expected = lattice.point(row);
        for (k, (&a, &b)) in nums.iter().zip(&expected).enumerate() {
            if (a - b).abs() > COORD_TOLERANCE * b.abs().max(1.0) {
                return Err(csv_err(
                    path,
                    format!(
                        "row {}: x{} = {a} is not lattice coordinate {b}",
                        row + 1,
                        k + 1
                    ),
                ));
            }
        }
        values.push(nums[dim]);
    }
    if values.len() != lattice.len() {
        return Err(csv_err(
            path,
            format!("expected {} rows, found {}", lattice.len(), values.len()),
        ));
    }
    Ok(SampledFunction::from_values(lattice, values)?)
}
