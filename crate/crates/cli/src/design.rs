//! Design matrices: the piecewise-linear developmental-time default and
//! user-supplied CSV matrices.

use std::path::Path;

use anyhow::{bail, Context, Result};
use dpclust::conjugate::DesignBlock;
use nalgebra::DMatrix;

/// Embryonic days 11–21, postnatal 0–14, adult: intercept and slope within
/// the embryonic and postnatal phases, a separate adult level.
pub fn developmental_design() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        9,
        5,
        &[
            1.0, 11.0, 0.0, 0.0, 0.0, //
            1.0, 13.0, 0.0, 0.0, 0.0, //
            1.0, 15.0, 0.0, 0.0, 0.0, //
            1.0, 18.0, 0.0, 0.0, 0.0, //
            1.0, 21.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 7.0, 0.0, //
            0.0, 0.0, 1.0, 14.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, 1.0,
        ],
    )
}

/// Intercept and slope over the sample index, used when there are not
/// nine samples and no matrix is given.
pub fn linear_design(samples: usize) -> DMatrix<f64> {
    DMatrix::from_fn(samples, 2, |r, c| if c == 0 { 1.0 } else { r as f64 })
}

/// Reads a comma-separated numeric matrix; blank lines and lines starting
/// with `#` are skipped.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(c, cell)| {
                cell.trim().parse::<f64>().with_context(|| {
                    format!("{}: line {}, column {}: '{}' is not a number", path.display(), k + 1, c + 1, cell.trim())
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                bail!("{}: line {}: expected {} columns, found {}", path.display(), k + 1, first.len(), row.len());
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: empty matrix", path.display());
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_row_iterator(r, c, rows.into_iter().flatten()))
}

/// Z from `z_path` or the default for `samples`; X from `x_path` or none.
pub fn build_design(samples: usize, z_path: Option<&Path>, x_path: Option<&Path>) -> Result<DesignBlock> {
    let z = match z_path {
        Some(p) => read_matrix(p)?,
        None if samples == 9 => developmental_design(),
        None => linear_design(samples),
    };
    let x = match x_path {
        Some(p) => read_matrix(p)?,
        None => DMatrix::zeros(samples, 0),
    };
    if z.nrows() != samples {
        bail!("design Z has {} rows but the data have {samples} samples", z.nrows());
    }
    if x.nrows() != samples {
        bail!("design X has {} rows but the data have {samples} samples", x.nrows());
    }
    Ok(DesignBlock::new(z, x)?)
}
