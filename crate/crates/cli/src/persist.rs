//! Writing run artifacts and their manifest.
//!
//! The manifest is itself a config file: its body is the full resolved configuration,
//! and the provenance fields sit in `#` comment lines, so `--config manifest.txt`
//! reruns the experiment bit-exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::config::Config;

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}: {source}")]
pub struct PersistError {
    pub path: PathBuf,
    pub source: std::io::Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub corpus_sha256: String,
    pub created_unix: u64,
    pub config: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn new(command: &str, cfg: &Config, corpus_bytes: &[u8]) -> Manifest {
        Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            corpus_sha256: sha256_hex(corpus_bytes),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            config: cfg.to_text(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# textstrat run manifest\n");
        let _ = writeln!(out, "# command = {}", self.command);
        let _ = writeln!(out, "# version = {}", self.version);
        let _ = writeln!(out, "# corpus_sha256 = {}", self.corpus_sha256);
        let _ = writeln!(out, "# created_unix = {}", self.created_unix);
        out.push_str(&self.config);
        out
    }
}

/// Writes each `(file name, contents)` pair and the manifest under `outdir`, creating
/// it if needed. Returns the written paths, manifest last.
pub fn persist_run(
    outdir: &Path,
    files: &[(&str, String)],
    manifest: &Manifest,
) -> Result<Vec<PathBuf>, PersistError> {
    std::fs::create_dir_all(outdir).map_err(|source| PersistError {
        path: outdir.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::new();
    let rendered = manifest.render();
    for (name, text) in files.iter().map(|(n, t)| (*n, t.as_str())).chain([(MANIFEST_FILE, rendered.as_str())]) {
        let p = outdir.join(name);
        std::fs::write(&p, text).map_err(|source| PersistError {
            path: p.clone(),
            source,
        })?;
        paths.push(p);
    }
    Ok(paths)
}
