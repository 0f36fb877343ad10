//! Strict CSV ingestion.
//!
//! The accepted dialect is comma-separated with a header row, period decimal
//! separator and no quoting. Every cell must parse to a finite number; there
//! is no imputation of missing cells.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },

    #[error("line {line}, column '{column}': {message}")]
    BadValue {
        line: u64,
        column: String,
        message: String,
    },

    #[error("header: {0}")]
    Header(String),

    #[error("no data rows")]
    Empty,

    #[error("unknown column '{0}'")]
    UnknownColumn(String),
}

/// Column-oriented numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self, DataError> {
        if names.len() != columns.len() {
            return Err(DataError::Header(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        check_names(&names)?;
        let n = columns.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(DataError::Empty);
        }
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != n {
                return Err(DataError::Header(format!(
                    "column '{name}' has {} rows, expected {n}",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(DataError::BadValue {
                    line: i as u64 + 2,
                    column: name.clone(),
                    message: format!("value {} is not finite", col[i]),
                });
            }
        }
        Ok(Dataset { names, columns })
    }

    pub fn from_csv_str(text: &str) -> Result<Self, DataError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .quoting(false)
            .flexible(false)
            .trim(csv::Trim::None)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(csv_error)?.clone();
        let names: Vec<String> = headers.iter().map(str::to_string).collect();
        check_names(&names)?;

        let mut columns = vec![Vec::new(); names.len()];
        for record in reader.records() {
            let record = record.map_err(csv_error)?;
            let line = record.position().map_or(0, |p| p.line());
            for (j, field) in record.iter().enumerate() {
                columns[j].push(parse_cell(field, line, &names[j])?);
            }
        }
        Dataset::new(names, columns)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Dataset::from_csv_str(&text)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.columns[0].len()
    }

    pub fn column(&self, name: &str) -> Result<&[f64], DataError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.columns[j].as_slice())
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    }

    /// Serializes in the accepted dialect. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn to_csv_string(&self) -> String {
        let mut out = self.names.join(",");
        out.push('\n');
        for i in 0..self.n_rows() {
            for (j, col) in self.columns.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{}", col[i]).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

fn check_names(names: &[String]) -> Result<(), DataError> {
    if names.is_empty() {
        return Err(DataError::Header("no columns".into()));
    }
    for (j, name) in names.iter().enumerate() {
        if name.is_empty() || name.trim() != name {
            return Err(DataError::Header(format!("column {} has an empty or padded name", j + 1)));
        }
        if name.contains('"') {
            return Err(DataError::Header(format!("quoted column name {name}")));
        }
        if names[..j].contains(name) {
            return Err(DataError::Header(format!("duplicate column '{name}'")));
        }
    }
    Ok(())
}

fn parse_cell(field: &str, line: u64, column: &str) -> Result<f64, DataError> {
    let bad = |message: String| DataError::BadValue {
        line,
        column: column.to_string(),
        message,
    };
    if field.is_empty() {
        return Err(bad("missing value".into()));
    }
    // Rust's float parser also accepts "inf", "NaN" and padded forms; none of
    // those belong to the dialect.
    if !field.bytes().all(|b| b.is_ascii_digit() || b"+-.eE".contains(&b)) {
        return Err(bad(format!("'{field}' is not a number")));
    }
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(bad(format!("'{field}' overflows"))),
        Err(_) => Err(bad(format!("'{field}' is not a number"))),
    }
}

fn csv_error(e: csv::Error) -> DataError {
    let line = e.position().map_or(0, |p| p.line());
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        csv::ErrorKind::Utf8 { .. } => "invalid UTF-8".to_string(),
        _ => e.to_string(),
    };
    DataError::Malformed { line, message }
}

/// Lower-case hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        write!(out, "{b:02x}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_simple_table() {
        let d = Dataset::from_csv_str("x,y\n1,2.5\n-3e2,0\n").unwrap();
        assert_eq!(d.names(), ["x", "y"]);
        assert_eq!(d.n_rows(), 2);
        assert_eq!(d.column("x").unwrap(), [1.0, -300.0]);
        assert_eq!(d.column("y").unwrap(), [2.5, 0.0]);
        assert!(matches!(d.column("z"), Err(DataError::UnknownColumn(_))));
    }

    #[test]
    fn crlf_line_endings() {
        let d = Dataset::from_csv_str("x\r\n1\r\n2\r\n").unwrap();
        assert_eq!(d.column("x").unwrap(), [1.0, 2.0]);
    }

    #[test]
    fn rejects_dialect_violations() {
        for text in [
            "x,y\n1,\n",
            "x,y\n1,2,3\n",
            "x,y\n1\n",
            "x\n\"1\"\n",
            "x\n1,5\n",
            "x\nNaN\n",
            "x\ninf\n",
            "x\n 1\n",
            "x\n1e999\n",
            "x;y\n1;2\n",
            "x\n",
            "x,x\n1,2\n",
            "",
        ] {
            assert!(Dataset::from_csv_str(text).is_err(), "{text:?} accepted");
        }
    }

    #[test]
    fn error_names_line_and_column() {
        let err = Dataset::from_csv_str("a,b\n1,2\n3,oops\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("'b'"), "{msg}");
    }

    #[test]
    fn csv_round_trip() {
        let d = Dataset::new(
            vec!["a".into(), "b".into()],
            vec![vec![0.1, 1e-300, -2.0], vec![1.0 / 3.0, 7.0, 1e21]],
        )
        .unwrap();
        assert_eq!(Dataset::from_csv_str(&d.to_csv_string()).unwrap(), d);
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
