//! JSON run manifests and the dataset listing consumed by `tune`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    /// Report name such as `F2`.
    pub name: String,
    pub elapsed_ms: f64,
    pub work_counter: u64,
}

/// Record of one command invocation. `argv` is enough to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config_path: Option<String>,
    pub inputs: Vec<String>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub stages: Vec<StageTiming>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, argv: &[String]) -> Self {
        Self {
            command: command.into(),
            argv: argv.to_vec(),
            config_path: None,
            inputs: Vec::new(),
            seed: 0,
            threads: None,
            stages: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(fs::write(path, text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// One `left right gt` entry of a dataset listing.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub left: PathBuf,
    pub right: PathBuf,
    pub gt: PathBuf,
}

/// Parses a dataset listing: one `left right gt` triple per line, paths
/// relative to `base`; blank lines and `#` comments are skipped.
pub fn parse_dataset(text: &str, base: &Path) -> Result<Vec<DatasetEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [l, r, g] = parts[..] else {
            return Err(Error::Invalid(format!(
                "dataset line {}: expected `left right gt`, got {} fields",
                i + 1,
                parts.len()
            )));
        };
        out.push(DatasetEntry {
            left: base.join(l),
            right: base.join(r),
            gt: base.join(g),
        });
    }
    if out.is_empty() {
        return Err(Error::Invalid("dataset listing has no entries".into()));
    }
    Ok(out)
}
