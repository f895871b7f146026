//! Flat `key=value` text used for configs, fitted baseline models and
//! benchmark reports.
//!
//! One pair per line, `#` starts a comment, surrounding whitespace is
//! ignored. Keys are emitted in a stable order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = Self::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            map.set_pair(line).map_err(|_| Error::Config {
                key: line.to_string(),
                msg: format!("line {} is not key=value", lineno + 1),
            })?;
        }
        Ok(map)
    }

    /// Apply a `key=value` override (the CLI's `--set`).
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair.split_once('=').ok_or_else(|| Error::Config {
            key: pair.to_string(),
            msg: "expected key=value".into(),
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config {
                key: pair.to_string(),
                msg: "empty key".into(),
            });
        }
        self.entries.insert(k.to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| Error::Config {
                key: key.to_string(),
                msg: format!("cannot parse {v:?}"),
            }),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| Error::Config {
            key: key.to_string(),
            msg: "missing".into(),
        })
    }

    /// Overwrite `slot` when `key` is present.
    pub fn update<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Reject any key outside `known`.
    pub fn check_keys(&self, known: &[&str]) -> Result<()> {
        match self.keys().find(|k| !known.contains(k)) {
            Some(k) => Err(Error::Config {
                key: k.to_string(),
                msg: "unknown key".into(),
            }),
            None => Ok(()),
        }
    }

    pub fn merge(&mut self, other: &KvMap) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// 64-bit FNV-1a over the canonical text.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_text().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

/// Types with a flat key-value representation.
pub trait KvConfig: Sized + Default {
    const KEYS: &'static [&'static str];

    /// Apply entries from `map` on top of `self`.
    fn apply(&mut self, map: &KvMap) -> Result<()>;

    fn to_kv(&self) -> KvMap;

    fn from_kv(map: &KvMap) -> Result<Self> {
        map.check_keys(Self::KEYS)?;
        let mut cfg = Self::default();
        cfg.apply(map)?;
        Ok(cfg)
    }
}
