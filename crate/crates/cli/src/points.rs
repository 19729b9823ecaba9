//! Numeric CSV rows for cone generators and points. A first line that does
//! not parse as numbers is taken to be a header.

use minimax_infer::DVector;

use crate::error::{CliError, Result};
use crate::keyvalue::number;

pub fn parse_rows(text: &str, origin: &str) -> Result<Vec<DVector<f64>>> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut out: Vec<DVector<f64>> = Vec::new();
    let mut first = true;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() {
            continue;
        }
        let cells: Vec<&str> = content.split(',').collect();
        let header = first && cells.iter().all(|c| number(c).is_err());
        first = false;
        if header {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, String> = cells.iter().map(|c| number(c)).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(message) => {
                return Err(CliError::Syntax {
                    origin: origin.to_string(),
                    line,
                    message,
                })
            }
        };
        if let Some(first) = out.first() {
            if first.len() != row.len() {
                return Err(CliError::Syntax {
                    origin: origin.to_string(),
                    line,
                    message: format!("expected {} values, found {}", first.len(), row.len()),
                });
            }
        }
        out.push(DVector::from_vec(row));
    }
    if out.is_empty() {
        return Err(CliError::Invalid(format!("{origin}: no numeric rows")));
    }
    Ok(out)
}

/// Exactly one numeric row.
pub fn parse_point(text: &str, origin: &str) -> Result<DVector<f64>> {
    let mut rows = parse_rows(text, origin)?;
    if rows.len() != 1 {
        return Err(CliError::Invalid(format!("{origin}: expected a single row, found {}", rows.len())));
    }
    Ok(rows.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_skipped() {
        let rows = parse_rows("a,b\n1,0\n0,1\n", "cone").unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(parse_point("1,-2", "pt").unwrap().as_slice(), &[1.0, -2.0]);
    }

    #[test]
    fn bad_rows_name_the_line() {
        let err = parse_rows("1,0\n0,x\n", "cone").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(parse_rows("1,0\n1\n", "cone").is_err());
        assert!(parse_rows("a,b\n", "cone").is_err());
        assert!(parse_point("1,2\n3,4\n", "pt").is_err());
        assert!(parse_rows("1,inf\n", "pt").is_err());
    }
}
