//! Per-command manifest: effective configuration, hashes of every input and
//! output, and tool versions. No timestamps, so identical runs produce
//! identical manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, PipelineConfig};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex(&Sha256::digest(fs::read(path)?)))
}

/// `p` itself when it is a file, otherwise every file below it.
fn files_under(p: &Path) -> Result<Vec<PathBuf>> {
    if !p.is_dir() {
        return Ok(vec![p.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(p)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for e in entries {
        out.extend(files_under(&e)?);
    }
    Ok(out)
}

/// Collects the files a command read and wrote. Paths inside the output
/// directory are recorded relative to it, prefixed with `$OUT/`.
#[derive(Debug)]
pub struct Recorder {
    out: PathBuf,
    base: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(out: &Path, base: &Path) -> Self {
        Recorder { out: out.to_path_buf(), base: base.to_path_buf(), inputs: Vec::new(), outputs: Vec::new() }
    }

    pub fn input(&mut self, p: impl Into<PathBuf>) {
        self.inputs.push(p.into());
    }

    pub fn output(&mut self, p: impl Into<PathBuf>) {
        self.outputs.push(p.into());
    }

    fn label(&self, p: &Path) -> String {
        let slashed = |q: &Path| q.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect::<Vec<_>>().join("/");
        if let Ok(rel) = p.strip_prefix(&self.out) {
            format!("$OUT/{}", slashed(rel))
        } else if let Ok(rel) = p.strip_prefix(&self.base) {
            slashed(rel)
        } else {
            slashed(p)
        }
    }

    fn hashes(&self, paths: &[PathBuf]) -> Result<Vec<FileHash>> {
        let mut files: Vec<&PathBuf> = Vec::new();
        for p in paths {
            if !files.contains(&p) {
                files.push(p);
            }
        }
        let mut out = Vec::new();
        for p in files {
            for f in files_under(p)? {
                out.push(FileHash { path: self.label(&f), sha256: sha256_file(&f)? });
            }
        }
        out.sort_by(|a, b| a.path.cmp(&b.path));
        out.dedup();
        Ok(out)
    }

    /// Write `manifests/<command>.json` under the output directory and return
    /// its path.
    pub fn finish(self, command: &str, cfg: &PipelineConfig) -> Result<PathBuf> {
        let manifest = Manifest {
            command: command.to_string(),
            tool: "usvsthem".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: cfg.hash(),
            config: serde_json::from_str(&cfg.canonical_json())?,
            inputs: self.hashes(&self.inputs)?,
            outputs: self.hashes(&self.outputs)?,
        };
        let dir = self.out.join("manifests");
        fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{command}.json"));
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(path)
    }
}
