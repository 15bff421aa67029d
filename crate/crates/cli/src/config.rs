//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are the long flag
//! names; `-` and `_` are interchangeable. A value given on the command line
//! always wins over the file, which wins over the built-in default.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
    path: String,
}

fn normalize_key(k: &str) -> String {
    k.trim().replace('-', "_")
}

impl ConfigFile {
    pub fn parse(text: &str, path: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{path}:{}: expected `key = value`", n + 1)))?;
            let key = normalize_key(k);
            if key.is_empty() {
                return Err(CliError::Usage(format!("{path}:{}: empty key", n + 1)));
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Usage(format!("{path}:{}: duplicate key `{key}`", n + 1)));
            }
        }
        Ok(ConfigFile {
            values,
            path: path.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("{}: `{key} = {raw}`: {e}", self.path))),
        }
    }

    /// Flag, else config file, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }

    /// Like [`pick`](Self::pick) without a default.
    pub fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    /// Keys that no command consumed are reported rather than ignored.
    pub fn check_known(&self, known: &[&str]) -> Result<(), CliError> {
        let unknown: Vec<&str> = self
            .values
            .keys()
            .map(String::as_str)
            .filter(|k| !known.contains(k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(format!("{}: unknown keys {}", self.path, unknown.join(", "))))
        }
    }
}
