//! Flat `key = value` configuration files. Flags override file values;
//! the merged map is echoed verbatim into reports for reproducibility.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex;

use crate::error::{Error, Result};

type C64 = Complex<f64>;

/// Ordered key → value map; insertion overwrites.
#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    map: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key = value` lines; `#` starts a comment; blank lines skipped.
    pub fn from_str(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            map.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { map })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.map.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                Error::Config(format!("key `{key}`: cannot parse `{raw}`: {e}"))
            }),
        }
    }

    pub fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get_parsed(key)?.unwrap_or(default))
    }

    pub fn get_bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(other) => Err(Error::Config(format!(
                "key `{key}`: expected boolean, got `{other}`"
            ))),
        }
    }
}

/// Parses one complex point written as `re,im` (e.g. `-1,0` or `1,1`).
pub fn parse_complex(s: &str) -> Result<C64> {
    let (re, im) = s
        .split_once(',')
        .ok_or_else(|| Error::Config(format!("bad complex `{s}`; expected `re,im`")))?;
    let re: f64 = re
        .trim()
        .parse()
        .map_err(|e| Error::Config(format!("bad complex `{s}`: {e}")))?;
    let im: f64 = im
        .trim()
        .parse()
        .map_err(|e| Error::Config(format!("bad complex `{s}`: {e}")))?;
    Ok(C64::new(re, im))
}

/// Parses `;`-separated complex points, e.g. `-1,0;1,1;1,-1`.
pub fn parse_z_points(s: &str) -> Result<Vec<C64>> {
    s.split(';')
        .filter(|t| !t.trim().is_empty())
        .map(parse_complex)
        .collect()
}

/// Parses a comma-separated integer grid, e.g. `256,512,1024,2048,4096`.
pub fn parse_grid(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("bad grid entry `{t}`: {e}")))
        })
        .collect()
}
