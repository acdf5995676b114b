//! File emission with post-write validation. Every output is re-read and
//! checked against its expected shape before the process can report
//! success, so a truncated or malformed file fails the run instead of
//! poisoning a downstream plot.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use carleman_core::{CarlemanError, Result};
use serde_json::Value;

/// Creates `dir` if needed and returns `dir/file`.
pub fn prepare(dir: &Path, file: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.join(file))
}

/// Writes a CSV through the closure, then re-reads it and checks the
/// header, the data row count, and that every field parses as a finite
/// number.
pub fn write_csv_checked(
    path: &Path,
    header: &str,
    rows: usize,
    write: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    write(&mut out)?;
    out.flush()?;
    drop(out);
    validate_csv(path, header, rows)
}

/// Checks an existing CSV file against the expected header and row count.
pub fn validate_csv(path: &Path, header: &str, rows: usize) -> Result<()> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let first = lines.next().unwrap_or("");
    if first != header {
        return Err(CarlemanError::Parse(format!(
            "{}: expected header {header:?}, found {first:?}",
            path.display()
        )));
    }
    let mut count = 0usize;
    for (idx, line) in lines.enumerate() {
        for field in line.split(',') {
            let value: f64 = field.parse().map_err(|_| {
                CarlemanError::Parse(format!(
                    "{}: row {}: unparseable field {field:?}",
                    path.display(),
                    idx + 1
                ))
            })?;
            if !value.is_finite() {
                return Err(CarlemanError::Parse(format!(
                    "{}: row {}: non-finite field {field:?}",
                    path.display(),
                    idx + 1
                )));
            }
        }
        count += 1;
    }
    if count != rows {
        return Err(CarlemanError::Parse(format!(
            "{}: expected {rows} data rows, found {count}",
            path.display()
        )));
    }
    Ok(())
}

/// Serializes a JSON value to `path`, then re-reads it and checks that the
/// expected keys all landed.
pub fn write_json_checked(path: &Path, value: &Value, keys: &[&str]) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value).map_err(CarlemanError::from)?;
    out.write_all(b"\n")?;
    out.flush()?;
    drop(out);
    let text = fs::read_to_string(path)?;
    let parsed: Value = serde_json::from_str(&text).map_err(CarlemanError::from)?;
    for key in keys {
        if parsed.get(key).is_none() {
            return Err(CarlemanError::Parse(format!(
                "{}: missing key {key:?}",
                path.display()
            )));
        }
    }
    Ok(())
}
