//! Run directories: CSV tables, JSON documents, `summary.txt` and the
//! checksummed `manifest.json`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.txt";

/// Shortest round-trip decimal; exponent form outside `[1e-4, 1e15)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    /// Entry in the formats document describing the columns.
    pub kind: String,
    pub sha256: String,
    pub bytes: u64,
    /// Data rows (CSV) or zero.
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureEntry {
    pub temperature: f64,
    pub t_over_tc: f64,
    pub n_beads: usize,
    /// `2π k_B T / ħ`.
    pub bound: f64,
    /// `|ω|` of the first Matsubara mode at the barrier top.
    pub matsubara_freq1: f64,
    pub matsubara_real: bool,
    /// Free ring-polymer frequencies `ω_k`, `k = 0..N`.
    pub omega_k: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub barrier_height: f64,
    pub crossover_temperature: f64,
    pub well_frequency: f64,
    pub morse_frequency: f64,
    pub dissociation_energy: f64,
    pub temperatures: Vec<TemperatureEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub workers: usize,
    pub config: RunConfig,
    /// The same configuration as loadable TOML.
    pub config_toml: String,
    pub derived: Derived,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn checksum(&self, file: &str) -> Option<&str> {
        self.outputs
            .iter()
            .find(|o| o.file == file)
            .map(|o| o.sha256.as_str())
    }
}

/// Files whose checksum no longer matches `manifest.json` (missing files
/// included).
pub fn verify_run_dir(dir: &Path) -> Result<Vec<String>, CliError> {
    let manifest = RunManifest::read(dir)?;
    let mut bad = Vec::new();
    for o in &manifest.outputs {
        match std::fs::read(dir.join(&o.file)) {
            Ok(bytes) if sha256_hex(&bytes) == o.sha256 => {}
            _ => bad.push(o.file.clone()),
        }
    }
    Ok(bad)
}

/// Collects the files of one run and writes them under `root`.
pub struct RunDir {
    root: PathBuf,
    files: Vec<OutputFile>,
    summary: Vec<String>,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, CliError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(RunDir {
            root,
            files: Vec::new(),
            summary: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }

    fn write(&mut self, name: &str, kind: &str, bytes: &[u8], rows: usize) -> Result<(), CliError> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.retain(|f| f.file != name);
        self.files.push(OutputFile {
            file: name.to_string(),
            kind: kind.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
            rows,
        });
        Ok(())
    }

    /// Writes a CSV table with a header row.
    pub fn csv(
        &mut self,
        name: &str,
        kind: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<(), CliError> {
        let mut text = header.join(",");
        text.push('\n');
        for r in rows {
            debug_assert_eq!(r.len(), header.len(), "{name}: row width");
            text.push_str(&r.join(","));
            text.push('\n');
        }
        self.write(name, kind, text.as_bytes(), rows.len())
    }

    pub fn json<T: Serialize>(
        &mut self,
        name: &str,
        kind: &str,
        value: &T,
    ) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("serialisable");
        text.push('\n');
        self.write(name, kind, text.as_bytes(), 0)
    }

    /// Adds a line to `summary.txt`.
    pub fn note(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }

    pub fn summary_lines(&self) -> &[String] {
        &self.summary
    }

    /// Writes `summary.txt` and `manifest.json`.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<RunManifest, CliError> {
        let mut text = self.summary.join("\n");
        text.push('\n');
        self.write(SUMMARY, "summary", text.as_bytes(), 0)?;
        manifest.outputs = self.files.clone();
        let path = self.root.join(MANIFEST);
        let mut body = serde_json::to_string_pretty(&manifest).expect("serialisable");
        body.push('\n');
        std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}
