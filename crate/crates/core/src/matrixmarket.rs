//! MatrixMarket coordinate export and import for sparse matrices.
//!
//! The assembled operators can get large and awkward to eyeball from Rust;
//! the coordinate format lets standard tools (scipy.io.mmread, Octave,
//! Julia) load them for inspection. Only the `matrix coordinate real
//! general` flavor is supported since that is exactly what a
//! [`SparseMatrix`] holds.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{CarlemanError, Result};
use crate::sparse::SparseMatrix;

/// Writes `matrix` to `path` in MatrixMarket coordinate format, 1-based
/// indices, one entry per line.
pub fn write_matrix_market(matrix: &SparseMatrix, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(
        out,
        "{} {} {}",
        matrix.rows(),
        matrix.cols(),
        matrix.nnz()
    )?;
    for &(r, c, v) in matrix.entries() {
        writeln!(out, "{} {} {:.16e}", r + 1, c + 1, v)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a `matrix coordinate real general` file written by
/// [`write_matrix_market`] or any compatible tool.
pub fn read_matrix_market(path: &Path) -> Result<SparseMatrix> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();

    let header = lines
        .next()
        .ok_or_else(|| CarlemanError::Parse("empty MatrixMarket file".into()))??;
    let lowered = header.to_ascii_lowercase();
    if !lowered.starts_with("%%matrixmarket") {
        return Err(CarlemanError::Parse(format!(
            "not a MatrixMarket file: first line {header:?}"
        )));
    }
    if !(lowered.contains("coordinate") && lowered.contains("real") && lowered.contains("general"))
    {
        return Err(CarlemanError::Parse(format!(
            "unsupported MatrixMarket flavor: {header:?}"
        )));
    }

    let mut size_line = None;
    for line in &mut lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        size_line = Some(trimmed.to_string());
        break;
    }
    let size_line =
        size_line.ok_or_else(|| CarlemanError::Parse("missing size line".into()))?;
    let dims: Vec<&str> = size_line.split_whitespace().collect();
    if dims.len() != 3 {
        return Err(CarlemanError::Parse(format!(
            "size line must be `rows cols nnz`, got {size_line:?}"
        )));
    }
    let rows: usize = dims[0]
        .parse()
        .map_err(|_| CarlemanError::Parse(format!("bad row count {:?}", dims[0])))?;
    let cols: usize = dims[1]
        .parse()
        .map_err(|_| CarlemanError::Parse(format!("bad column count {:?}", dims[1])))?;
    let nnz: usize = dims[2]
        .parse()
        .map_err(|_| CarlemanError::Parse(format!("bad entry count {:?}", dims[2])))?;

    let mut triplets = Vec::with_capacity(nnz);
    for line in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(CarlemanError::Parse(format!(
                "entry line must be `row col value`, got {trimmed:?}"
            )));
        }
        let r: usize = fields[0]
            .parse()
            .map_err(|_| CarlemanError::Parse(format!("bad row index {:?}", fields[0])))?;
        let c: usize = fields[1]
            .parse()
            .map_err(|_| CarlemanError::Parse(format!("bad column index {:?}", fields[1])))?;
        let v: f64 = fields[2]
            .parse()
            .map_err(|_| CarlemanError::Parse(format!("bad value {:?}", fields[2])))?;
        if r == 0 || c == 0 {
            return Err(CarlemanError::Parse(
                "MatrixMarket indices are 1-based; found index 0".into(),
            ));
        }
        triplets.push((r - 1, c - 1, v));
    }
    if triplets.len() != nnz {
        return Err(CarlemanError::Parse(format!(
            "size line promised {nnz} entries, file has {}",
            triplets.len()
        )));
    }
    SparseMatrix::from_triplets(rows, cols, triplets)
}
