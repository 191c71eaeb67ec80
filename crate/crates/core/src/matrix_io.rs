//! Plain-text complex matrices: a header line `N M`, then `N·M` lines
//! `re im` in row-major order.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{c, CMat};

pub fn format_matrix(m: &CMat) -> String {
    let mut out = String::with_capacity(32 * m.len() + 16);
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for k in 0..m.ncols() {
            let z = m[(i, k)];
            // `{:e}` round-trips f64 exactly.
            let _ = writeln!(out, "{:e} {:e}", z.re, z.im);
        }
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<CMat> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty input".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad header `{header}`"))))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Parse(format!("header must be `N M`, got `{header}`")));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (k, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("entry {k}: bad number in `{line}`"))))
            .collect::<Result<_>>()?;
        let [re, im] = vals[..] else {
            return Err(Error::Parse(format!("entry {k}: expected `re im`, got `{line}`")));
        };
        data.push(c(re, im));
    }
    if data.len() != rows * cols {
        return Err(Error::Parse(format!("expected {} entries, found {}", rows * cols, data.len())));
    }
    Ok(CMat::from_row_slice(rows, cols, &data))
}

pub fn read_matrix(path: &Path) -> Result<CMat> {
    parse_matrix(&std::fs::read_to_string(path)?)
}

pub fn write_matrix(path: &Path, m: &CMat) -> Result<()> {
    std::fs::write(path, format_matrix(m))?;
    Ok(())
}
