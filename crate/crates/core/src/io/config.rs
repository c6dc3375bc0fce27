//! Flat key-value configuration files: one `key = value` pair per line,
//! `#` comments and blank lines ignored.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::fs;
use std::path::Path;

#[derive(Clone, Debug, Default)]
pub struct KvConfig {
    values: HashMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(KvConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn get_str(&self, key: &str, default: &str) -> String {
        self.get(key).unwrap_or(default).to_string()
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{key}: bad float {v:?}"))),
        }
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{key}: bad integer {v:?}"))),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{key}: bad integer {v:?}"))),
        }
    }

    /// Parse a `;`-separated list of `dft_bins/frame_length/frame_shift`
    /// triples, e.g. `512/320/80;128/80/40;2048/1920/640`.
    pub fn get_stft_triples(
        &self,
        key: &str,
    ) -> Result<Option<Vec<(usize, usize, usize)>>> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        let mut out = Vec::new();
        for item in v.split(';') {
            let parts: Vec<&str> = item.trim().split('/').collect();
            if parts.len() != 3 {
                return Err(Error::Config(format!(
                    "{key}: expected bins/length/shift, got {item:?}"
                )));
            }
            let nums: Vec<usize> = parts
                .iter()
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("{key}: bad integer {p:?}")))
                })
                .collect::<Result<_>>()?;
            out.push((nums[0], nums[1], nums[2]));
        }
        Ok(Some(out))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(|s| s.as_str())
    }
}
