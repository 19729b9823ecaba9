//! Line-oriented `key = value` text with `#` comments.

use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Splits `text` into entries. Duplicate keys are rejected.
pub fn parse_entries(text: &str, origin: &str) -> Result<Vec<Entry>> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut entries: Vec<Entry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(syntax(origin, line, format!("expected 'key = value', found '{content}'")));
        };
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(syntax(origin, line, format!("invalid key '{key}'")));
        }
        if let Some(prev) = entries.iter().find(|e| e.key == key) {
            return Err(syntax(
                origin,
                line,
                format!("key '{key}' already set on line {}", prev.line),
            ));
        }
        entries.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(entries)
}

pub fn syntax(origin: &str, line: usize, message: impl Into<String>) -> CliError {
    CliError::Syntax {
        origin: origin.to_string(),
        line,
        message: message.into(),
    }
}

pub fn number(text: &str) -> std::result::Result<f64, String> {
    let t = text.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(format!("'{t}' is not finite")),
        Err(_) => Err(format!("'{t}' is not a number")),
    }
}

pub fn list(text: &str) -> std::result::Result<Vec<f64>, String> {
    if text.trim().is_empty() {
        return Err("empty list".into());
    }
    text.split(',').map(number).collect()
}

/// Rows separated by `;`, entries by `,`.
pub fn matrix(text: &str) -> std::result::Result<DMatrix<f64>, String> {
    let rows: Vec<Vec<f64>> = text.split(';').map(list).collect::<std::result::Result<_, _>>()?;
    let cols = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(format!("row {} has {} entries, expected {cols}", i + 1, r.len()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn vector(text: &str) -> std::result::Result<DVector<f64>, String> {
    list(text).map(DVector::from_vec)
}

impl Entry {
    pub fn fail(&self, origin: &str, message: impl std::fmt::Display) -> CliError {
        syntax(origin, self.line, format!("{}: {message}", self.key))
    }
}
