//! Run manifests: one `manifest.json` per output directory recording what
//! produced it and the hashes of everything it contains.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool_version: String,
    pub stage: String,
    pub command_line: Vec<String>,
    pub config_hash: String,
    /// The full configuration, enough to rerun the stage.
    pub config: PipelineConfig,
    pub seeds: BTreeMap<String, u64>,
    pub bar_hash: Option<String>,
    pub dataset_hashes: BTreeMap<String, String>,
    /// Hash of the stage's inputs; equal keys and intact outputs mean the stage can be skipped.
    pub input_key: String,
    /// Relative path to SHA-256 of every file in the directory except the manifest.
    pub outputs: BTreeMap<String, String>,
    pub started_unix: f64,
    pub finished_unix: f64,
}

pub fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// SHA-256 of a list of strings, each terminated by a newline.
pub fn key_of(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_dir() {
            walk(root, &path, out)?;
        } else if path.strip_prefix(root).map(|p| p != Path::new(MANIFEST_FILE)).unwrap_or(true) {
            out.push(path);
        }
    }
    Ok(())
}

/// Hashes every file below `dir` except the top-level manifest.
pub fn hash_outputs(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut files = Vec::new();
    walk(dir, dir, &mut files)?;
    files
        .into_iter()
        .map(|p| {
            let rel = p.strip_prefix(dir).expect("below dir").to_string_lossy().replace('\\', "/");
            Ok((rel, file_sha256(&p)?))
        })
        .collect()
}

impl RunManifest {
    pub fn new(stage: &str, command_line: &[String], config: &PipelineConfig, input_key: String) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            stage: stage.to_string(),
            command_line: command_line.to_vec(),
            config_hash: config.hash(),
            config: config.clone(),
            seeds: BTreeMap::new(),
            bar_hash: None,
            dataset_hashes: BTreeMap::new(),
            input_key,
            outputs: BTreeMap::new(),
            started_unix: now_unix(),
            finished_unix: 0.0,
        }
    }

    /// Hashes the directory contents and writes the manifest into it.
    pub fn finish(mut self, dir: &Path) -> Result<Self> {
        self.outputs = hash_outputs(dir)?;
        self.finished_unix = now_unix();
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(self)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(CliError::missing(&path, "no manifest; run the producing stage first"));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
    }

    /// The manifest's key matches and every recorded output is present and unchanged.
    pub fn is_current(dir: &Path, input_key: &str) -> bool {
        let Ok(m) = Self::read(dir) else {
            return false;
        };
        m.input_key == input_key && hash_outputs(dir).is_ok_and(|h| h == m.outputs)
    }

    /// Key identifying this directory's content, for downstream stages.
    pub fn content_key(&self) -> String {
        let flat: Vec<String> = self.outputs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let refs: Vec<&str> = flat.iter().map(String::as_str).collect();
        key_of(&refs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifests_detect_changes() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        std::fs::create_dir_all(d.join("sub")).unwrap();
        std::fs::write(d.join("a.csv"), "1\n").unwrap();
        std::fs::write(d.join("sub/b.csv"), "2\n").unwrap();
        let m = RunManifest::new("test", &["dno".into()], &PipelineConfig::default(), "k1".into())
            .finish(d)
            .unwrap();
        assert_eq!(m.outputs.len(), 2);
        assert!(m.outputs.contains_key("sub/b.csv"));
        assert_eq!(RunManifest::read(d).unwrap(), m);
        assert!(RunManifest::is_current(d, "k1"));
        assert!(!RunManifest::is_current(d, "k2"));
        std::fs::write(d.join("a.csv"), "3\n").unwrap();
        assert!(!RunManifest::is_current(d, "k1"));
    }

    #[test]
    fn missing_manifest_is_a_dependency_error() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(RunManifest::read(dir.path()).unwrap_err().exit_code(), 3);
        assert!(!RunManifest::is_current(dir.path(), "x"));
    }
}
