//! Observation records stored as `k,y` CSV.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Parses a `k,y` CSV record. A header line is optional; indices must be `0, 1, 2, …`.
/// `NaN` (or an empty field) marks a missing observation.
pub fn parse_record(text: &str) -> Result<Vec<f64>> {
    let mut ys = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let (k, y) = match (fields.next(), fields.next(), fields.next()) {
            (Some(k), Some(y), None) => (k, y),
            _ => return Err(Error::Parse(format!("line {}: expected `k,y`", line_no + 1))),
        };
        if ys.is_empty() && k == "k" {
            continue;
        }
        let k: usize = k
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad index `{k}`", line_no + 1)))?;
        if k != ys.len() {
            return Err(Error::Parse(format!(
                "line {}: expected index {}, found {k}",
                line_no + 1,
                ys.len()
            )));
        }
        let y = if y.is_empty() || y.eq_ignore_ascii_case("nan") {
            f64::NAN
        } else {
            y.parse()
                .map_err(|_| Error::Parse(format!("line {}: bad value `{y}`", line_no + 1)))?
        };
        ys.push(y);
    }
    Ok(ys)
}

pub fn read_record(path: &Path) -> Result<Vec<f64>> {
    let file = std::fs::File::open(path)?;
    let mut text = String::new();
    for line in std::io::BufReader::new(file).lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    parse_record(&text)
}

/// Writes `k,y` with a header; values use the shortest round-tripping form.
pub fn write_record(path: &Path, ys: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "k,y")?;
    for (k, y) in ys.iter().enumerate() {
        if y.is_nan() {
            writeln!(out, "{k},NaN")?;
        } else {
            writeln!(out, "{k},{y:?}")?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_and_without_header() {
        assert_eq!(parse_record("k,y\n0,1.5\n1,-2\n").unwrap(), vec![1.5, -2.0]);
        assert_eq!(parse_record("0,1.5\n1,-2").unwrap(), vec![1.5, -2.0]);
        let ys = parse_record("0,nan\n1,\n").unwrap();
        assert!(ys.iter().all(|y| y.is_nan()));
    }

    #[test]
    fn rejects_gaps_and_garbage() {
        assert!(parse_record("0,1\n2,1\n").is_err());
        assert!(parse_record("0,abc\n").is_err());
        assert!(parse_record("0,1,2\n").is_err());
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let ys = vec![0.1, -1e-300, 20.0, f64::NAN, 1.0 / 3.0];
        write_record(&path, &ys).unwrap();
        let back = read_record(&path).unwrap();
        for (a, b) in ys.iter().zip(&back) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }
}
