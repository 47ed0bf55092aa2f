use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use edpm::Result;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Record of one run. Re-running the subcommand with `--config` pointing at
/// the listed `config.json` reproduces every artifact byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: Option<String>,
    pub parameters: BTreeMap<String, Value>,
    pub seed: u64,
    pub artifacts: Vec<Artifact>,
    pub code_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory that remembers what was written to it.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, contents)?;
        self.record(p.clone());
        Ok(p)
    }

    /// Registers a file written by other means.
    pub fn record(&mut self, p: PathBuf) {
        if !self.written.contains(&p) {
            self.written.push(p);
        }
    }

    pub fn finish(
        self,
        subcommand: &str,
        config_path: Option<&Path>,
        parameters: BTreeMap<String, Value>,
        seed: u64,
    ) -> Result<PathBuf> {
        let mut artifacts = Vec::new();
        for p in &self.written {
            let bytes = fs::read(p)?;
            let rel = p.strip_prefix(&self.root).unwrap_or(p);
            artifacts.push(Artifact {
                path: rel.to_string_lossy().into_owned(),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            });
        }
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            config_path: config_path.map(|p| p.to_string_lossy().into_owned()),
            parameters,
            seed,
            artifacts,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        };
        let path = self.path("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(path)
    }
}
