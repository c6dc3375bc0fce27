//! Dataset manifests: one whitespace-separated line per utterance,
//! `split wav_path feat_path`, where `feat_path` may be `-` to request
//! feature extraction on load.

use crate::error::{Error, Result};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ManifestEntry {
    pub split: Split,
    pub wav: PathBuf,
    /// `None` requests feature extraction when the entry is loaded.
    pub features: Option<PathBuf>,
}

#[derive(Clone, Debug, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Config(format!(
                    "manifest line {}: expected `split wav feat`, got {line:?}",
                    lineno + 1
                )));
            }
            let features = if fields[2] == "-" {
                None
            } else {
                Some(base.join(fields[2]))
            };
            entries.push(ManifestEntry {
                split: Split::parse(fields[0])?,
                wav: base.join(fields[1]),
                features,
            });
        }
        Ok(DatasetManifest { entries })
    }

    /// Paths are resolved relative to the manifest's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&fs::read_to_string(path)?, base)
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries_and_splits() {
        let m = DatasetManifest::parse(
            "# corpus\ntrain a.wav a.bin\nvalidation b.wav -\ntest c.wav c.bin\n",
            Path::new("/data"),
        )
        .unwrap();
        assert_eq!(m.entries.len(), 3);
        assert_eq!(m.split(Split::Train).len(), 1);
        assert_eq!(m.split(Split::Validation)[0].features, None);
        assert_eq!(m.entries[0].wav, PathBuf::from("/data/a.wav"));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(DatasetManifest::parse("train a.wav", Path::new(".")).is_err());
        assert!(DatasetManifest::parse("dev a.wav a.bin", Path::new(".")).is_err());
    }
}
