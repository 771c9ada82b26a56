//! `key = value` run configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may appear
//! once. The hash is the SHA-256 of the sorted `key=value` lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SEED_ENV: &str = "ACLB_SEED";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: source.to_owned(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(err("empty key".into()));
            }
            if entries.insert(k.to_owned(), v.to_owned()).is_some() {
                return Err(err(format!("duplicate key {k:?}")));
            }
        }
        Ok(RunConfig { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Rejects any key outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.entries.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!(
                "unknown config key {k:?}; expected one of: {}",
                allowed.join(", ")
            ))),
            None => Ok(()),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_owned(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|e: T::Err| Error::Config(format!("config key {key}: cannot parse {v:?}: {e}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Seed with precedence: explicit flag, then the environment variable,
    /// then the `seed` key, then `default`.
    pub fn resolve_seed(&self, flag: Option<u64>, default: u64) -> Result<u64> {
        if let Some(s) = flag {
            return Ok(s);
        }
        if let Ok(v) = std::env::var(SEED_ENV) {
            return v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")));
        }
        self.get_or("seed", default)
    }

    pub fn canonical(&self) -> String {
        self.entries.iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k}={v}");
            s
        })
    }

    /// Lowercase hex SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .fold(String::with_capacity(64), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_hashes_canonically() {
        let a = RunConfig::parse("# run\nlr = 0.01\n\nseed=3\n", "a").unwrap();
        let b = RunConfig::parse("seed = 3\nlr=0.01", "b").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.canonical(), "lr=0.01\nseed=3\n");
        assert_eq!(a.get::<f64>("lr").unwrap(), Some(0.01));
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn empty_hash_is_sha256_of_nothing() {
        assert_eq!(
            RunConfig::new().hash(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse("novalue", "x").is_err());
        assert!(RunConfig::parse("a=1\na=2", "x").is_err());
        let c = RunConfig::parse("sede=1", "x").unwrap();
        assert!(c.check_keys(&["seed"]).is_err());
        assert!(RunConfig::parse("seed=x", "x").unwrap().get::<u64>("seed").is_err());
    }

    #[test]
    fn flag_beats_config() {
        let c = RunConfig::parse("seed=3", "x").unwrap();
        assert_eq!(c.resolve_seed(Some(9), 0).unwrap(), 9);
    }
}
