//! Flat key=value config files and the flag/config/default resolution.
//!
//! Precedence is command line over config file over built-in default. Keys
//! use the long flag names without dashes (`combiner = copula`). Unknown
//! keys are rejected so typos surface instead of silently using defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Keys a config file may set, shared across subcommands. Flags not listed
/// here (paths, output locations, `--final-eval`) are per-invocation and
/// must be given on the command line.
const KNOWN_KEYS: &[&str] = &[
    "combiner",
    "columns",
    "seed",
    "grid",
    "id-fractions",
    "ood-fractions",
    "vote-rule",
    "marginal",
    "copula-family",
    "co-n-reference",
    "co-spheres",
    "co-epsilon",
    "co-variant",
    "co-k-neighbors",
    "strategy",
    "top-frac",
    "beam-width",
    "beam-depth",
    "samples",
    "percentile",
    "top-k",
];

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected key = value", path.display(), idx + 1))?;
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("{}:{}: unknown config key {key:?}", path.display(), idx + 1);
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                bail!("{}:{}: duplicate config key {key:?}", path.display(), idx + 1);
            }
        }
        Ok(ConfigFile { values })
    }

    /// CLI value if present, else the config value, else the default.
    pub fn resolve<T>(&self, cli: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key), "unregistered config key {key}");
        if let Some(v) = cli {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|e| anyhow!("config key {key} = {raw:?}: {e}")),
            None => Ok(default),
        }
    }

    /// Like [`resolve`](Self::resolve) but without a default.
    pub fn resolve_opt<T>(&self, cli: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key), "unregistered config key {key}");
        if cli.is_some() {
            return Ok(cli);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("config key {key} = {raw:?}: {e}")),
            None => Ok(None),
        }
    }
}

/// Comma-separated list wrapper so `FromStr` types compose with clap and
/// the config file uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct CommaList<T>(pub Vec<T>);

impl<T> FromStr for CommaList<T>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.trim().is_empty() {
            return Err("empty list".to_string());
        }
        s.split(',')
            .map(|part| part.trim().parse().map_err(|e| format!("{part:?}: {e}")))
            .collect::<std::result::Result<Vec<T>, _>>()
            .map(CommaList)
    }
}

impl<T> std::ops::Deref for CommaList<T> {
    type Target = Vec<T>;

    fn deref(&self) -> &Vec<T> {
        &self.0
    }
}
