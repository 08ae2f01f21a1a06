//! CSV artifacts with fixed float formatting.

use std::path::Path;

use crate::error::{Error, Result};

/// Seventeen significant digits, scientific notation; empty for `None`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

/// Writes a header and rows to `path`.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// `key,value` table.
pub fn write_summary(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let rows: Vec<Vec<String>> = entries.iter().map(|(k, v)| vec![k.clone(), v.clone()]).collect();
    write_csv(path, &["key", "value"], &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        let v = 0.1 + 0.2;
        let s = fmt_float(v);
        assert_eq!(s.parse::<f64>().unwrap(), v);
        assert_eq!(s, "3.0000000000000004e-1");
    }
}
