//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are skipped. Keys are lowercase
//! identifiers and may appear once per source. Command-line overrides are
//! merged on top of the file.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use gpemu::Error;

type Result<T> = std::result::Result<T, Error>;

fn valid_key(k: &str) -> bool {
    !k.is_empty()
        && k.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
        && k.as_bytes()[0].is_ascii_lowercase()
}

/// Parses config text into ordered `(key, value)` pairs.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| Error::Config(format!("config line {}: {reason}", i + 1));
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key = value, got `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if !valid_key(k) {
            return Err(bad(format!("invalid key `{k}`")));
        }
        if v.is_empty() {
            return Err(bad(format!("key `{k}` has an empty value")));
        }
        if !seen.insert(k.to_string()) {
            return Err(bad(format!("key `{k}` appears twice")));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Splits a `key=value` override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not key=value")))?;
    let (k, v) = (k.trim(), v.trim());
    if !valid_key(k) || v.is_empty() {
        return Err(Error::Config(format!("override `{s}` is not key=value")));
    }
    Ok((k.to_string(), v.to_string()))
}

/// Merged configuration that remembers which keys a command consumed.
#[derive(Debug, Clone, Default)]
pub struct Keys {
    map: BTreeMap<String, String>,
    used: BTreeSet<String>,
}

impl Keys {
    /// File entries first, then overrides; overrides win.
    pub fn merge(file: Vec<(String, String)>, overrides: Vec<(String, String)>) -> Self {
        let mut map = BTreeMap::new();
        for (k, v) in file.into_iter().chain(overrides) {
            map.insert(k, v);
        }
        Keys {
            map,
            used: BTreeSet::new(),
        }
    }

    pub fn str(&mut self, key: &str) -> Option<String> {
        self.used.insert(key.to_string());
        self.map.get(key).cloned()
    }

    pub fn req_str(&mut self, key: &str) -> Result<String> {
        self.str(key)
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    pub fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{v}`"))),
        }
    }

    pub fn get_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn req<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    pub fn flag(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.str(key).as_deref() {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(Error::Config(format!("key `{key}`: expected true or false, got `{v}`"))),
        }
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{}`", s.trim())))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Rejects keys the command never asked for.
    pub fn finish(self) -> Result<()> {
        let unknown: Vec<&String> = self.map.keys().filter(|k| !self.used.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            let names: Vec<String> = unknown.iter().map(|k| format!("`{k}`")).collect();
            Err(Error::Config(format!("unknown key {}", names.join(", "))))
        }
    }
}
