//! Plain-text matrix exchange format, shared repo-wide.
//!
//! Line 1 holds `<rows> <cols>`; each following line holds one row of
//! whitespace-separated decimals. Numbers are printed with 17 significant
//! digits (enough for an exact `f64` round trip); the parser accepts any
//! finite decimal or scientific notation. No comments.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::Error;
use crate::Result;

/// Serialize a matrix in the text format.
pub fn write_matrix_text(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_f64(m[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

/// Parse the text format back into a matrix.
pub fn read_matrix_text(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty matrix text".into()))?;
    let mut dims = header.split_whitespace();
    let rows: usize = parse_dim(dims.next(), "rows")?;
    let cols: usize = parse_dim(dims.next(), "cols")?;
    if dims.next().is_some() {
        return Err(Error::Parse("header must be `<rows> <cols>`".into()));
    }
    let mut entries = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        if i >= rows {
            return Err(Error::Parse(format!("expected {rows} rows, found more")));
        }
        let mut count = 0;
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Parse(format!("bad number `{tok}` in row {}", i + 1)))?;
            if !v.is_finite() {
                return Err(Error::NonFinite("matrix text entry"));
            }
            entries.push(v);
            count += 1;
        }
        if count != cols {
            return Err(Error::Parse(format!(
                "row {} has {count} entries, expected {cols}",
                i + 1
            )));
        }
    }
    if entries.len() != rows * cols {
        return Err(Error::Parse(format!(
            "expected {rows} rows, found {}",
            entries.len() / cols.max(1)
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &entries))
}

/// Format an `f64` with 17 significant digits (exact round trip).
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_dim(tok: Option<&str>, what: &str) -> Result<usize> {
    tok.ok_or_else(|| Error::Parse(format!("missing {what} in header")))?
        .parse()
        .map_err(|_| Error::Parse(format!("bad {what} in header")))
}
