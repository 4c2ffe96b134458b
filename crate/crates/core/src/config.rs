//! Flat `key = value` configuration files.
//!
//! One entry per line, `#` starts a comment, keys are dotted names such as
//! `scenario.kind`. Lists use `,` between items and `;` between matrix rows.
//! Keys are written back in sorted order so that echoed configs are
//! byte-stable.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("duplicate key {0:?}")]
    Duplicate(String),
    #[error("key {key:?}: cannot parse {value:?}: {msg}")]
    Value { key: String, value: String, msg: String },
    #[error("missing required key {0:?}")]
    Missing(String),
    #[error("{0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.to_string() })?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
            }
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate(key));
            }
        }
        Ok(KvConfig { entries })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_string())?;
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Entries of `other` override entries of `self`.
    pub fn merged(&self, other: &KvConfig) -> KvConfig {
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().map(|(k, v)| (k.clone(), v.clone())));
        KvConfig { entries }
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| ConfigError::Value { key: key.into(), value: v.into(), msg: e.to_string() })
            })
            .transpose()
    }

    pub fn parsed_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn required<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.parsed(key)?.ok_or_else(|| ConfigError::Missing(key.into()))
    }

    pub fn vector(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.get(key).map(|v| parse_vector(key, v)).transpose()
    }

    pub fn matrix(&self, key: &str) -> Result<Option<Vec<Vec<f64>>>, ConfigError> {
        self.get(key).map(|v| v.split(';').map(|row| parse_vector(key, row)).collect()).transpose()
    }
}

impl fmt::Display for KvConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

fn parse_vector(key: &str, text: &str) -> Result<Vec<f64>, ConfigError> {
    text.split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|e| ConfigError::Value {
                key: key.into(),
                value: text.into(),
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Formats with round-trip precision (shortest representation).
pub fn format_vector(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

pub fn format_matrix(rows: &[Vec<f64>]) -> String {
    rows.iter().map(|r| format_vector(r)).collect::<Vec<_>>().join("; ")
}
