//! Numeric datasets and their CSV form.

use crate::error::{Error, Result};

/// `n × d` table of finite observations with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<String>,
    values: Vec<f64>,
    n: usize,
}

impl Dataset {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = columns.len();
        if d == 0 {
            return Err(Error::config("dataset needs at least one column"));
        }
        if rows.len() < 2 {
            return Err(Error::config(format!("dataset needs at least 2 rows, got {}", rows.len())));
        }
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Data {
                    row: i,
                    message: format!("expected {d} values, found {}", row.len()),
                });
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data {
                    row: i,
                    message: format!("non-finite value in column {}", columns[j]),
                });
            }
            values.extend_from_slice(row);
        }
        Ok(Dataset {
            columns,
            n: rows.len(),
            values,
        })
    }

    /// Parses a header line followed by rows of decimal numerals.
    ///
    /// Line and column numbers in errors are 1-based.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            column: 1,
            message: "missing header line".into(),
        })?;
        let header = header.strip_prefix('\u{feff}').unwrap_or(header);
        let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        if let Some(j) = columns.iter().position(|c| c.is_empty()) {
            return Err(Error::Parse {
                line: 1,
                column: j + 1,
                message: "empty column name".into(),
            });
        }
        let d = columns.len();
        let mut body: Vec<(usize, &str)> = lines.collect();
        while body.last().is_some_and(|(_, l)| l.trim().is_empty()) {
            body.pop();
        }
        let mut rows = Vec::with_capacity(body.len());
        for (idx, line) in body {
            let line_no = idx + 1;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != d {
                return Err(Error::Parse {
                    line: line_no,
                    column: fields.len().min(d) + 1,
                    message: format!("expected {d} fields, found {}", fields.len()),
                });
            }
            let mut row = Vec::with_capacity(d);
            for (j, field) in fields.iter().enumerate() {
                row.push(parse_decimal(field).ok_or_else(|| Error::Parse {
                    line: line_no,
                    column: j + 1,
                    message: format!("'{}' is not a finite decimal number", field.trim()),
                })?);
            }
            rows.push(row);
        }
        if rows.len() < 2 {
            return Err(Error::Parse {
                line: rows.len() + 2,
                column: 1,
                message: format!("dataset needs at least 2 rows, got {}", rows.len()),
            });
        }
        Dataset::new(columns, rows)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.columns.len();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.columns.len())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }
}

/// Accepts optional sign, digits, a decimal point and an exponent; rejects
/// `inf`, `nan` and anything else `f64::from_str` would otherwise admit.
pub(crate) fn parse_decimal(field: &str) -> Option<f64> {
    let s = field.trim();
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit() || matches!(b, b'+' | b'-' | b'.' | b'e' | b'E')) {
        return None;
    }
    if !s.bytes().any(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_header_and_rows() {
        let d = Dataset::from_csv_str("x,y\n1,2\n-3.5,4e-1\n").unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.columns(), &["x".to_string(), "y".to_string()]);
        assert_eq!(d.row(1), &[-3.5, 0.4]);
        assert_eq!(d.column_index("y"), Some(1));
    }

    #[test]
    fn reports_line_and_column() {
        let err = Dataset::from_csv_str("a,b\n1,2\n3,oops\n").unwrap_err();
        match err {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
        let err = Dataset::from_csv_str("a,b\n1,2\n3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn rejects_non_finite_and_short_data() {
        assert!(Dataset::from_csv_str("a\n1\nnan\n").is_err());
        assert!(Dataset::from_csv_str("a\n1\ninf\n").is_err());
        assert!(Dataset::from_csv_str("a\n1\n").is_err());
        assert!(Dataset::from_csv_str("").is_err());
        assert!(Dataset::from_csv_str("a,\n1,2\n3,4\n").is_err());
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let d = Dataset::new(vec!["u".into(), "v".into()], vec![vec![0.1, -2.0], vec![1e-300, 3.25]]).unwrap();
        assert_eq!(Dataset::from_csv_str(&d.to_csv_string()).unwrap(), d);
    }
}
