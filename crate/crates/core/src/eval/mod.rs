//! Evaluation: metrics, experiment sweeps and report files.

mod metrics;
mod sweeps;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

pub use metrics::{evaluate, evaluate_with, ConfusionCounts, EvalReport};
pub use sweeps::{
    component_sweep, dimension_sweep, estimator_comparison, low_resource_cell, low_resource_sweep,
    mean_and_population_std, CellResult, ComponentRow, DimensionRow, EstimatorRow, LowResourceCell, LowResourceRow,
    LowResourceTable, Splits,
};

use crate::error::{Error, Result};

#[derive(Serialize)]
struct JsonReport<'a, R: Serialize> {
    experiment: &'a str,
    rows: &'a [R],
}

/// Write `{"experiment": name, "rows": [...]}`. Non-finite numbers become `null`.
pub fn write_json_report<R: Serialize>(experiment: &str, rows: &[R], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &JsonReport { experiment, rows })
        .map_err(|e| Error::Format(format!("serializing report: {e}")))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// One CSV line per row, header from the field names. Rows must be flat.
pub fn write_csv_report<R: Serialize>(rows: &[R], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Format(format!("writing {}: {e}", path.display()))
    }
}

/// Write both `<stem>.json` and `<stem>.csv` into `dir`.
pub fn write_reports<R: Serialize>(experiment: &str, rows: &[R], dir: impl AsRef<Path>, stem: &str) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json_report(experiment, rows, dir.join(format!("{stem}.json")))?;
    write_csv_report(rows, dir.join(format!("{stem}.csv")))
}
