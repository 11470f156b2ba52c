//! `key = value` configuration files. Blank lines and `#` comments are
//! ignored. Command-line flags take precedence over file values.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "jobs",
    "sample_rate",
    "window",
    "order",
    "f0_min",
    "f0_max",
    "threshold",
    "shift_range",
    "segments",
    "scale_range",
    "k",
    "max_iters",
];

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected key = value", i + 1))?;
            let key = k.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("config line {}: unknown key '{key}'", i + 1);
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Config { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| anyhow!("config key '{key}': {e}"))
            })
            .transpose()
    }

    /// Flag value if given, else config value, else `default`.
    pub fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(match flag {
            Some(v) => v,
            None => self.get(key)?.unwrap_or(default),
        })
    }
}

/// A pair of numbers written `lo,hi` (or a single `x` meaning `-x,x` for
/// symmetric ranges).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range<T>(pub T, pub T);

impl<T> FromStr for Range<T>
where
    T: FromStr + Copy + std::ops::Neg<Output = T>,
    T::Err: std::fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parse = |p: &str| p.trim().parse::<T>().map_err(|e| format!("'{p}': {e}"));
        match s.split_once(',') {
            Some((a, b)) => Ok(Range(parse(a)?, parse(b)?)),
            None => {
                let x = parse(s)?;
                Ok(Range(-x, x))
            }
        }
    }
}

/// Inclusive count range `lo,hi` (a single value means `v,v`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountRange(pub usize, pub usize);

impl FromStr for CountRange {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parse = |p: &str| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}"));
        match s.split_once(',') {
            Some((a, b)) => Ok(CountRange(parse(a)?, parse(b)?)),
            None => {
                let v = parse(s)?;
                Ok(CountRange(v, v))
            }
        }
    }
}
