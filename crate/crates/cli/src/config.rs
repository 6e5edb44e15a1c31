//! `key=value` configuration files.
//!
//! Keys are the long flag names, with `-` or `_`. Blank lines and lines
//! starting with `#` are ignored. A value given on the command line wins
//! over the file; the seed falls back to `MSQKD_SEED` after both.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::{CliError, CliResult};

pub const SEED_ENV: &str = "MSQKD_SEED";

const KNOWN_KEYS: &[&str] = &[
    "rounds",
    "qf",
    "qr",
    "pm",
    "seed",
    "sample_fraction",
    "mode",
    "attack",
    "transcript",
    "stats",
    "from_stats",
    "csv",
    "q_max",
    "steps",
    "forward_mult",
    "reverse_mult",
    "out",
    "baseline",
    "trials",
    "dim",
    "from_transcript",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::file(path))?;
        Self::parse(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Invalid(format!(
                    "line {}: expected key=value",
                    n + 1
                )));
            };
            let key = key.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Invalid(format!(
                    "line {}: unknown key {key:?}",
                    n + 1
                )));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Invalid(format!("config key {key}: {e}")))
            })
            .transpose()
    }

    /// The flag value if given, else the file value.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    /// Flag, then file, then `default`.
    pub fn pick_or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    /// Flag, then file, then `MSQKD_SEED`, then 0.
    pub fn seed(&self, flag: Option<u64>) -> CliResult<u64> {
        if let Some(s) = self.pick(flag, "seed")? {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|e| CliError::Invalid(format!("{SEED_ENV}: {e}"))),
            Err(_) => Ok(0),
        }
    }
}
