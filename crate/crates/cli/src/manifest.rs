//! `run_manifest.json`: what a command read, what it wrote, and the
//! settings it ran with. No timestamps, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lesion_triage::hashing::sha256_hex;
use lesion_triage::{Error, Result};
use serde::Serialize;

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Default, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(sha256_hex(&bytes))
}

/// Hash of every file under `dir`, keyed by path relative to `root`.
fn hash_tree(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    let io = |e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    };
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(io)?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            hash_tree(root, &p, out)?;
        } else {
            let key = p.strip_prefix(root).unwrap_or(&p).to_string_lossy().replace('\\', "/");
            out.insert(key, hash_file(&p)?);
        }
    }
    Ok(())
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String) -> Self {
        Self {
            tool: "triage",
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            config_hash,
            ..Self::default()
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        let hash = if path.is_dir() {
            let mut files = BTreeMap::new();
            hash_tree(path, path, &mut files)?;
            sha256_hex(&serde_json::to_vec(&files)?)
        } else {
            hash_file(path)?
        };
        self.inputs.insert(role.into(), hash);
        Ok(())
    }

    /// Record `name` (a file or directory under `dir`) as an output.
    pub fn output(&mut self, dir: &Path, name: &str) -> Result<()> {
        let path = dir.join(name);
        if path.is_dir() {
            let mut files = BTreeMap::new();
            hash_tree(dir, &path, &mut files)?;
            self.outputs.extend(files);
        } else {
            self.outputs.insert(name.into(), hash_file(&path)?);
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
    }
}
