//! File formats: CSV matrices, vectors and signals, raw f64 signals, plan
//! JSON, event CSV.
//!
//! Readers report the offending path and line on parse failures. Writers go
//! through a temporary file in the destination directory and rename into
//! place, so an interrupted run never leaves a truncated file that looks
//! like a result.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::classify::ClassificationEvent;
use crate::error::{Error, Result};
use crate::plan::MultiplicationPlan;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads numeric CSV records: comma-separated values, `#` comments, blank
/// lines skipped. Returns rows plus the source line of each row.
fn read_numeric_rows(path: &Path) -> Result<Vec<(u64, Vec<f64>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => io_err(path)(source),
            other => Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: format!("{other:?}"),
            },
        })?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(record.len());
        for field in record.iter() {
            if field.is_empty() {
                continue;
            }
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("not a number: {field:?}"),
            })?;
            row.push(value);
        }
        if !row.is_empty() {
            rows.push((line, row));
        }
    }
    Ok(rows)
}

/// Matrix CSV: one template per record, all records the same length.
pub fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let rows = read_numeric_rows(path)?;
    if rows.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let expected = rows[0].1.len();
    for (index, (_, row)) in rows.iter().enumerate() {
        if row.len() != expected {
            return Err(Error::RaggedMatrix {
                row: index,
                expected,
                got: row.len(),
            });
        }
    }
    Ok(rows.into_iter().map(|(_, row)| row).collect())
}

/// Vector / signal CSV: values separated by commas or newlines, flattened
/// in reading order.
pub fn read_vector_csv(path: &Path) -> Result<Vec<f64>> {
    Ok(read_numeric_rows(path)?
        .into_iter()
        .flat_map(|(_, row)| row)
        .collect())
}

/// Raw signal: little-endian f64 samples, nothing else.
pub fn read_signal_f64le(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!(
                "raw f64 file length {} is not a multiple of 8",
                bytes.len()
            ),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Atomic text write: temp file in the target directory, then rename.
pub fn write_text_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir),
        None => tempfile::NamedTempFile::new_in("."),
    }
    .map_err(io_err(path))?;
    tmp.write_all(contents.as_bytes()).map_err(io_err(path))?;
    tmp.flush().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

/// One comma-separated record, trailing newline.
pub fn vector_to_csv(values: &[f64]) -> String {
    let fields: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    format!("{}\n", fields.join(","))
}

pub fn write_vector_csv(path: &Path, values: &[f64]) -> Result<()> {
    write_text_atomic(path, &vector_to_csv(values))
}

pub const EVENTS_CSV_HEADER: &str = "step,template,correlation,distance";

pub fn events_to_csv(events: &[ClassificationEvent]) -> String {
    let mut out = String::from(EVENTS_CSV_HEADER);
    out.push('\n');
    for e in events {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.step, e.template, e.correlation, e.distance
        ));
    }
    out
}

pub fn write_events_csv(path: &Path, events: &[ClassificationEvent]) -> Result<()> {
    write_text_atomic(path, &events_to_csv(events))
}

/// Loads and structurally validates a plan.
pub fn read_plan_json(path: &Path) -> Result<MultiplicationPlan> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let plan: MultiplicationPlan = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    plan.validate()?;
    Ok(plan)
}

pub fn write_plan_json(path: &Path, plan: &MultiplicationPlan) -> Result<()> {
    let text = serde_json::to_string_pretty(plan).map_err(|e| Error::Internal(e.to_string()))?;
    write_text_atomic(path, &format!("{text}\n"))
}
