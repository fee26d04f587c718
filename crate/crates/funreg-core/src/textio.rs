//! Deterministic text formatting and parsing shared by the dataset, model and
//! score-table writers. Floats are emitted with 18 significant digits so that
//! every value round-trips bit-exactly through `f64::from_str`.

use crate::error::{Error, Result};

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.17e}")
}

pub(crate) fn join_f64(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(fmt_f64)
        .collect::<Vec<_>>()
        .join(",")
}

pub(crate) fn parse_f64(token: &str, line: usize) -> Result<f64> {
    let t = token.trim();
    t.parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("expected a real number, got '{t}'"),
    })
}

pub(crate) fn parse_usize(token: &str, line: usize) -> Result<usize> {
    let t = token.trim();
    t.parse::<usize>().map_err(|_| Error::Parse {
        line,
        msg: format!("expected a nonnegative integer, got '{t}'"),
    })
}

pub(crate) fn parse_f64_row(row: &str, line: usize) -> Result<Vec<f64>> {
    if row.trim().is_empty() {
        return Ok(Vec::new());
    }
    row.split(',').map(|tok| parse_f64(tok, line)).collect()
}

/// Strips a required `#key: ` prefix and returns the remainder.
pub(crate) fn expect_header<'a>(line_text: &'a str, key: &str, line: usize) -> Result<&'a str> {
    let prefix = format!("#{key}:");
    line_text.strip_prefix(&prefix).map(str::trim).ok_or_else(|| Error::Parse {
        line,
        msg: format!("expected header '#{key}: ...', got '{line_text}'"),
    })
}
