//! Latent embedding export for external visualization tools.

use std::path::Path;

use lwp_core::{Matrix, ModelState};

use crate::error::{Error, Result};

/// Writes `encode(model, x)` as CSV with header `z0,...,z{k-1}`, one row per
/// input, floats in shortest round-trip form.
pub fn export_embeddings(model: &ModelState, x: &Matrix, path: &Path) -> Result<()> {
    let z = if x.rows() == 0 {
        Matrix::zeros(0, model.encoder().latent_dim())
    } else {
        model.encode(x)?
    };
    write_matrix_csv(&z, "z", path)
}

pub(crate) fn write_matrix_csv(m: &Matrix, prefix: &str, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record((0..m.cols()).map(|j| format!("{prefix}{j}")))
        .map_err(|e| csv_err(path, e))?;
    for i in 0..m.rows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(Error::io(path))
}

/// Reads a headered numeric CSV back into a matrix.
pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let cols = r.headers().map_err(|e| csv_err(path, e))?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        for field in rec.iter() {
            data.push(
                field
                    .parse::<f64>()
                    .map_err(|e| Error::format(path, format!("row {rows}: {e}")))?,
            );
        }
        rows += 1;
    }
    Ok(Matrix::from_vec(rows, cols, data)?)
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}
