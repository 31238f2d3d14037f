//! Run directories, result files and the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedSource {
    Flag,
    Env,
    Config,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub seed: u64,
    pub status: TaskStatus,
    pub millis: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub version: String,
    /// SHA-256 of the configuration as run, seed override applied.
    pub config_hash: String,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub workers: Option<usize>,
    pub tasks: BTreeMap<String, TaskEntry>,
    /// Some task failed; its files are absent, the others are intact.
    pub partial: bool,
    pub total_millis: u64,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn failures(&self) -> impl Iterator<Item = (&String, &TaskEntry)> {
        self.tasks.iter().filter(|(_, t)| t.status == TaskStatus::Failed)
    }
}

/// A fresh directory that records every file written into it.
pub struct RunDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl RunDir {
    /// Creates `<parent>/<name>-<unix millis>`, adding `-k` if that exists.
    pub fn create(parent: &Path, name: &str) -> Result<Self> {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        let millis = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        let base = format!("{name}-{millis}");
        for k in 0.. {
            let dir = if k == 0 { parent.join(&base) } else { parent.join(format!("{base}-{k}")) };
            match fs::create_dir(&dir) {
                Ok(()) => return Ok(Self { root: dir, files: Vec::new() }),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e).with_context(|| format!("creating {}", dir.display())),
            }
        }
        unreachable!()
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        if self.files.iter().any(|f| f.path == rel) {
            bail!("output file {rel} written twice");
        }
        let path = self.root.join(rel);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(FileEntry { path: rel.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<(PathBuf, RunManifest)> {
        let mut files = self.files;
        files.sort_by(|a, b| a.path.cmp(&b.path));
        manifest.files = files;
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(self.root.join(MANIFEST), text)?;
        Ok((self.root, manifest))
    }
}

/// Reads a manifest from a run directory (or the manifest file itself) and
/// checks every listed digest.
pub fn load_verified(path: &Path) -> Result<(PathBuf, RunManifest)> {
    let (dir, manifest_path) = if path.is_dir() {
        (path.to_path_buf(), path.join(MANIFEST))
    } else {
        (path.parent().map(Path::to_path_buf).unwrap_or_default(), path.to_path_buf())
    };
    if !manifest_path.exists() {
        bail!("integrity error: no {MANIFEST} in {}", dir.display());
    }
    let text = fs::read_to_string(&manifest_path)?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .with_context(|| format!("integrity error: unreadable {}", manifest_path.display()))?;
    for f in &manifest.files {
        let p = dir.join(&f.path);
        let bytes = fs::read(&p).with_context(|| format!("integrity error: {} listed but missing", f.path))?;
        let digest = sha256_hex(&bytes);
        if digest != f.sha256 {
            bail!("integrity error: digest mismatch for {} (manifest {}, file {digest})", f.path, f.sha256);
        }
    }
    Ok((dir, manifest))
}
