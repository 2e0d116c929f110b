//! Artifact writing: every file starts with a provenance line carrying the
//! schema version, the config hash and the seed.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

impl Stamp {
    pub fn new(config_text: &str, seed: u64) -> Self {
        Self {
            config_hash: hex::encode(Sha256::digest(config_text.as_bytes())),
            seed,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "schema_version={} config_sha256={} seed={}",
            SCHEMA_VERSION, self.config_hash, self.seed
        )
    }
}

pub struct OutDir {
    root: PathBuf,
    stamp: Stamp,
}

impl OutDir {
    pub fn create(root: &Path, stamp: Stamp) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            stamp,
        })
    }

    pub fn stamp(&self) -> &Stamp {
        &self.stamp
    }

    /// Writes a CSV whose first line is `# <stamp>`.
    pub fn csv(&self, name: &str, body: &[u8]) -> Result<PathBuf> {
        let mut bytes = format!("# {}\n", self.stamp.line()).into_bytes();
        bytes.extend_from_slice(body);
        self.raw(name, &bytes)
    }

    pub fn raw(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}
