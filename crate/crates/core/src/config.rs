//! Plain-text `key=value` configuration with dotted keys.
//!
//! Blank lines and lines starting with `#` are ignored. Whitespace around keys
//! and values is trimmed. Repeating a key is an error.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {raw:?}", lineno + 1)))?;
            let key = k.trim();
            if key.is_empty() || key.split('.').any(|part| part.is_empty()) {
                return Err(Error::Config(format!("line {}: bad key {key:?}", lineno + 1)));
            }
            if entries.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key}", lineno + 1)));
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    /// Parses `key` when present.
    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse().map_err(|e| Error::Config(format!("{key}={v}: {e}"))))
            .transpose()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Fails on any key not listed in `known` and not under one of `prefixes`.
    pub fn reject_unknown(&self, known: &[&str], prefixes: &[&str]) -> Result<()> {
        for key in self.keys() {
            if !known.contains(&key) && !prefixes.iter().any(|p| key.starts_with(p)) {
                return Err(Error::Config(format!("unknown key {key}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for KeyValues {
    /// Canonical form: sorted keys, one `key=value` per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_canonicalizes() {
        let kv = KeyValues::parse("# comment\n train.lr_init = 1e-4\n\ntrain.epochs=3\n").unwrap();
        assert_eq!(kv.get("train.lr_init"), Some("1e-4"));
        assert_eq!(kv.parsed::<u32>("train.epochs").unwrap(), Some(3));
        assert_eq!(kv.parsed::<u32>("train.missing").unwrap(), None);
        assert_eq!(kv.to_string(), "train.epochs=3\ntrain.lr_init=1e-4\n");
        assert_eq!(KeyValues::parse(&kv.to_string()).unwrap(), kv);
    }

    #[test]
    fn rejects_malformed() {
        assert!(KeyValues::parse("novalue").is_err());
        assert!(KeyValues::parse("a..b=1").is_err());
        assert!(KeyValues::parse("a=1\na=2").is_err());
        let kv = KeyValues::parse("train.epochs=x").unwrap();
        assert!(kv.parsed::<u32>("train.epochs").is_err());
        assert!(kv.reject_unknown(&["train.seed"], &[]).is_err());
        assert!(kv.reject_unknown(&[], &["train."]).is_ok());
    }
}
