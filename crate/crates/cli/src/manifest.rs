//! Run manifests and the output set a command produces.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Command;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical JSON form of a value.
pub fn json_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("serializable"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// The command line as given, after config-file expansion.
    pub argv: Vec<String>,
    /// The full parameter set; `verify` re-runs from this alone.
    pub params: Command,
    pub seed: Option<u64>,
    /// Hashes of the model, process, measure or coefficient spec used.
    pub input_hashes: BTreeMap<String, String>,
    pub created_at: String,
    pub outputs: Vec<OutputRecord>,
}

/// Files produced by one command, held in memory until written.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
    pub input_hashes: BTreeMap<String, String>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    pub fn hash_input<T: Serialize>(&mut self, key: &str, value: &T) {
        self.input_hashes.insert(key.to_string(), json_hash(value));
    }

    pub fn records(&self) -> Vec<OutputRecord> {
        self.files
            .iter()
            .map(|(name, bytes)| OutputRecord { path: name.clone(), sha256: sha256_hex(bytes) })
            .collect()
    }
}

/// CSV with a header row; floats are written in shortest round-trip form.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> anyhow::Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(Self { writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> anyhow::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(self) -> anyhow::Result<Vec<u8>> {
        Ok(self.writer.into_inner().map_err(|e| anyhow::anyhow!("csv: {e}"))?)
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Raised when an output would be overwritten; maps to the usage exit status.
#[derive(Debug)]
pub struct Clobber(pub PathBuf);

impl std::fmt::Display for Clobber {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} exists; pass --force to overwrite", self.0.display())
    }
}

impl std::error::Error for Clobber {}

/// Writes the outputs and their manifest into `dir`.
pub fn write_run(dir: &Path, outputs: &Outputs, manifest: &RunManifest, force: bool) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let names = outputs.files.iter().map(|(n, _)| n.as_str()).chain([MANIFEST_FILE]);
    if !force {
        for name in names {
            let p = dir.join(name);
            if p.exists() {
                return Err(Clobber(p).into());
            }
        }
    }
    for (name, bytes) in &outputs.files {
        let p = dir.join(name);
        std::fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
    }
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    std::fs::write(dir.join(MANIFEST_FILE), bytes)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> anyhow::Result<RunManifest> {
    let path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
