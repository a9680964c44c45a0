//! Flat `key = value` text format shared by policy documents and experiment
//! configs.
//!
//! One entry per line; blank lines and lines starting with `#` are ignored.
//! Keys are lowercase ASCII words with underscores. A value wrapped in double
//! quotes has the quotes removed. Keys may appear once.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KvError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KvEntry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str) -> Result<Vec<KvEntry>, KvError> {
    let mut out: Vec<KvEntry> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(KvError::Syntax {
                line,
                message: format!("expected `key = value`, found {trimmed:?}"),
            });
        };
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') {
            return Err(KvError::Syntax {
                line,
                message: format!("invalid key {key:?}"),
            });
        }
        if out.iter().any(|e| e.key == key) {
            return Err(KvError::Syntax {
                line,
                message: format!("duplicate key {key:?}"),
            });
        }
        let mut value = value.trim();
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = &value[1..value.len() - 1];
        }
        out.push(KvEntry {
            line,
            key: key.to_string(),
            value: value.to_string(),
        });
    }
    Ok(out)
}

/// Render a value so that [`parse`] returns it unchanged.
pub fn quote(value: &str) -> String {
    let needs = value.is_empty()
        || value != value.trim()
        || value.starts_with('"')
        || value.starts_with('#');
    if needs {
        format!("\"{value}\"")
    } else {
        value.to_string()
    }
}
