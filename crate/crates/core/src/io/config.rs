use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// A parsed `key = value` file. Blank lines and `#` comments are ignored;
/// keys are case-sensitive and may appear once.
///
/// Lookups record which keys were read so [`KeyValues::finish`] can reject
/// misspelled or unsupported keys.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    source: PathBuf,
    entries: BTreeMap<String, (usize, String)>,
    used: std::cell::RefCell<BTreeSet<String>>,
}

impl KeyValues {
    pub fn parse(text: &str, source: impl Into<PathBuf>) -> Result<Self> {
        let source = source.into();
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::load(&source, format!("line {}: expected key = value", n + 1)));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::load(&source, format!("line {}: empty key", n + 1)));
            }
            if entries.insert(k.to_string(), (n + 1, v.to_string())).is_some() {
                return Err(Error::load(&source, format!("line {}: duplicate key '{k}'", n + 1)));
            }
        }
        Ok(Self {
            source,
            entries,
            used: Default::default(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
        Self::parse(&text, path)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        let (_, v) = self.entries.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(v)
    }

    /// Parses `key` if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        let Some(raw) = self.get_str(key) else {
            return Ok(None);
        };
        let line = self.entries[key].0;
        raw.parse().map(Some).map_err(|_| {
            Error::load(
                &self.source,
                format!("line {line}: cannot parse value '{raw}' of '{key}'"),
            )
        })
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::load(&self.source, format!("missing required key '{key}'")))
    }

    /// Fails if any key was never looked up.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self
            .entries
            .keys()
            .filter(|k| !used.contains(*k))
            .map(String::as_str)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::load(&self.source, format!("unknown keys: {}", unknown.join(", "))))
        }
    }

    pub fn source(&self) -> &Path {
        &self.source
    }
}
