//! CSV and text output.

use std::path::Path;

use crate::error::{Error, Result};

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Numeric CSV with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Parses a header plus rows of numbers (`inf`, `NaN` accepted).
pub fn parse_csv(text: &str) -> Result<CsvTable> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::InvalidInput("empty CSV".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let rows = lines
        .enumerate()
        .map(|(i, l)| {
            let row: Vec<f64> = l
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidInput(format!("CSV row {}: not a number: {v:?}", i + 1)))
                })
                .collect::<Result<_>>()?;
            if row.len() != header.len() {
                return Err(Error::InvalidInput(format!(
                    "CSV row {} has {} fields, header has {}",
                    i + 1,
                    row.len(),
                    header.len()
                )));
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok(CsvTable { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn io_errors_carry_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        match write_text(&blocker.join("out.csv"), "a") {
            Err(Error::Io { path, .. }) => assert!(path.starts_with(&blocker)),
            other => panic!("{other:?}"),
        }
        let nested = dir.path().join("a/b/c.csv");
        write_text(&nested, "x\n1\n").unwrap();
        assert_eq!(parse_csv(&std::fs::read_to_string(nested).unwrap()).unwrap().rows, vec![vec![1.0]]);
    }

    #[test]
    fn malformed_rows() {
        assert!(parse_csv("a,b\n1\n").is_err());
        assert!(parse_csv("a\nfoo\n").is_err());
        let t = parse_csv("a,b\ninf,NaN\n").unwrap();
        assert!(t.rows[0][0].is_infinite() && t.rows[0][1].is_nan());
    }

    proptest! {
        #[test]
        fn decimal_round_trip(values in proptest::collection::vec(-1e12f64..1e12, 1..20)) {
            let mut text = String::from("v\n");
            for v in &values {
                text.push_str(&format!("{v}\n"));
            }
            let t = parse_csv(&text).unwrap();
            for (row, v) in t.rows.iter().zip(&values) {
                prop_assert_eq!(row[0], *v);
            }
        }
    }
}
