//! CSV matrix persistence.
//!
//! One matrix row per line, comma-separated decimal literals, UTF-8 with LF
//! line endings. Values are written with 17 significant digits so a
//! save/load round trip is exact.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::Frame;

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                tok.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("`{tok}` is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {w} fields, found {}", row.len()),
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    let Some(cols) = width else {
        return Err(Error::Parse { line: 1, message: "no data rows".into() });
    };
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

pub fn render_matrix(matrix: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..matrix.nrows() {
        let line: Vec<String> = (0..matrix.ncols()).map(|c| format_f64(matrix[(r, c)])).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<Frame> {
    let text = fs::read_to_string(path)?;
    Frame::new(parse_matrix(&text)?)
}

pub fn save_matrix(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, render_matrix(frame.matrix()).as_bytes())
}

/// Reads a vector stored either as a single row or a single column.
pub fn load_vector(path: impl AsRef<Path>) -> Result<DVector<f64>> {
    let m = parse_matrix(&fs::read_to_string(path)?)?;
    if m.nrows() == 1 || m.ncols() == 1 {
        Ok(DVector::from_iterator(m.len(), m.iter().copied()))
    } else {
        Err(Error::invalid(format!(
            "expected a single row or column, found {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Column vector, one value per line.
pub fn save_vector(v: &DVector<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for x in v.iter() {
        out.push_str(&format_f64(*x));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Writes to a sibling temp file, then renames over the target.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("`{}` has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
