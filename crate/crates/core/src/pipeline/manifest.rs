use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    /// Relative to the output directory for artifacts, as given for raw inputs.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: u32,
    pub config_hash: String,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub elapsed_ms: u64,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let n = std::io::copy(&mut f, &mut h).map_err(|e| Error::io(path, e))?;
    Ok((hex::encode(h.finalize()), n))
}

pub fn hash_entry(root: &Path, rel: &str) -> Result<FileHash> {
    let (sha256, bytes) = sha256_file(&root.join(rel))?;
    Ok(FileHash {
        path: rel.to_string(),
        sha256,
        bytes,
    })
}

/// Write-temp-then-rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn manifest_path(root: &Path, stage: &str) -> PathBuf {
    root.join(stage).join(MANIFEST_FILE)
}

impl Manifest {
    pub fn new(stage: &str, config_hash: &str, inputs: Vec<FileHash>, outputs: Vec<FileHash>, elapsed_ms: u64) -> Self {
        Manifest {
            stage: stage.to_string(),
            version: MANIFEST_VERSION,
            config_hash: config_hash.to_string(),
            inputs,
            outputs,
            elapsed_ms,
        }
    }

    pub fn load(root: &Path, stage: &str) -> Result<Option<Manifest>> {
        let p = manifest_path(root, stage);
        match fs::read(&p) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| Error::Format(format!("{}: {e}", p.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(p, e)),
        }
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        write_atomic(&manifest_path(root, &self.stage), &bytes)
    }

    pub fn check_config(&self, root: &Path, config_hash: &str) -> Result<()> {
        if self.config_hash != config_hash {
            return Err(Error::ConfigMismatch {
                dir: root.join(&self.stage),
                expected: config_hash.to_string(),
                found: self.config_hash.clone(),
            });
        }
        Ok(())
    }

    /// Re-hashes every recorded output.
    pub fn verify_outputs(&self, root: &Path) -> Result<()> {
        for f in &self.outputs {
            verify(&root.join(&f.path), &f.sha256)?;
        }
        Ok(())
    }

    pub fn output(&self, rel: &str) -> Option<&FileHash> {
        self.outputs.iter().find(|f| f.path == rel)
    }
}

pub fn verify(path: &Path, expected: &str) -> Result<()> {
    let (found, _) = sha256_file(path)?;
    if found != expected {
        return Err(Error::HashMismatch {
            path: path.to_path_buf(),
            expected: expected.to_string(),
            found,
        });
    }
    Ok(())
}
