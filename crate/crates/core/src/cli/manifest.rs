use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dataio::collect_files;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<OutputDigest>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a file, or of every file under a directory (relative path and
/// contents, in sorted order).
pub fn digest_path(path: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_files(path, &mut files)?;
    if files.len() == 1 && files[0] == path {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        return Ok(sha256_hex(&bytes));
    }
    let mut h = Sha256::new();
    for f in files {
        let rel = f.strip_prefix(path).unwrap_or(&f);
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(std::fs::read(&f).map_err(|e| Error::io(&f, e))?);
    }
    Ok(hex::encode(h.finalize()))
}

/// Everything a command produces, held in memory until the command has
/// finished so that a failure leaves the output directory untouched.
#[derive(Debug)]
pub struct Artifacts {
    command: &'static str,
    config: serde_json::Value,
    inputs: Vec<InputDigest>,
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn new(command: &'static str, config: &impl Serialize) -> Result<Self> {
        let config = serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Artifacts {
            command,
            config,
            inputs: Vec::new(),
            files: Vec::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sha256 = digest_path(path)?;
        self.inputs.push(InputDigest {
            path: path.to_path_buf(),
            sha256,
        });
        Ok(())
    }

    pub fn add(&mut self, name: impl Into<String>, contents: impl Into<Vec<u8>>) {
        self.files.push((name.into(), contents.into()));
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|f| f.0 == name).map(|f| f.1.as_slice())
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            tool: "pedbench",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config: self.config.clone(),
            inputs: self.inputs.clone(),
            outputs: self
                .files
                .iter()
                .map(|(name, bytes)| OutputDigest {
                    name: name.clone(),
                    sha256: sha256_hex(bytes),
                })
                .collect(),
        }
    }

    /// Writes every file plus `manifest.json` into `dir`.
    pub fn commit(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, bytes) in &self.files {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        }
        let mut json = serde_json::to_string_pretty(&self.manifest()).map_err(|e| Error::Config(e.to_string()))?;
        json.push('\n');
        let p = dir.join("manifest.json");
        std::fs::write(&p, json).map_err(|e| Error::io(&p, e))
    }
}
