//! Artifact writing and the run manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{sha256_hex, OutputFormat};
use crate::error::Result;
use crate::io::{to_json, write_text, Table};

pub const MANIFEST: &str = "manifest.json";
pub const FAILED_MARKER: &str = ".failed";

#[derive(Clone, Debug, Serialize)]
pub struct ArtifactRecord {
    pub path: String,
    pub sha256: String,
}

/// Where and how one command writes. Artifacts are recorded in write order.
pub struct RunContext {
    pub out_dir: PathBuf,
    pub format: OutputFormat,
    pub config_hash: String,
    pub seed: u64,
    pub verbose: bool,
    /// Directory of the config file, used to resolve relative input paths.
    pub config_dir: Option<PathBuf>,
    pub artifacts: Vec<ArtifactRecord>,
}

impl RunContext {
    pub fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[muonium] {}", msg.as_ref());
        }
    }

    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        write_text(&self.out_dir.join(name), content)?;
        self.log(format!("wrote {name}"));
        self.artifacts.push(ArtifactRecord { path: name.to_string(), sha256: sha256_hex(content.as_bytes()) });
        Ok(())
    }

    /// CSV plus a `.meta.json` sidecar, or a single JSON document holding the typed data.
    pub fn table<T: Serialize>(&mut self, stem: &str, table: &Table, data: &T, metadata: Value) -> Result<()> {
        match self.format {
            OutputFormat::Csv => {
                self.write(&format!("{stem}.csv"), &table.to_csv())?;
                let meta = json!({ "config_hash": self.config_hash, "metadata": metadata });
                self.write(&format!("{stem}.meta.json"), &to_json(&meta)?)
            }
            OutputFormat::Json => self.json(stem, data, metadata),
        }
    }

    /// Always JSON, whatever the requested format.
    pub fn json<T: Serialize>(&mut self, stem: &str, data: &T, metadata: Value) -> Result<()> {
        let doc = json!({ "config_hash": self.config_hash, "metadata": metadata, "data": data });
        self.write(&format!("{stem}.json"), &to_json(&doc)?)
    }

    /// Resolves a data path: absolute as given, otherwise the output directory first and the
    /// config directory second.
    pub fn resolve_input(&self, p: &str) -> PathBuf {
        let path = Path::new(p);
        if path.is_absolute() {
            return path.to_path_buf();
        }
        let in_out = self.out_dir.join(path);
        if in_out.exists() {
            return in_out;
        }
        match &self.config_dir {
            Some(d) if d.join(path).exists() => d.join(path),
            _ => path.to_path_buf(),
        }
    }
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config_source: &'a str,
    pub config_hash: &'a str,
    pub seed: u64,
    pub workers: usize,
    pub format: OutputFormat,
    pub status: &'static str,
    pub error: Option<String>,
    pub artifacts: &'a [ArtifactRecord],
    /// Wall-clock fields; they are the only entries that differ between identical runs.
    pub started_unix_s: f64,
    pub wall_time_s: f64,
}

pub fn write_manifest(dir: &Path, m: &Manifest<'_>) -> Result<()> {
    write_text(&dir.join(MANIFEST), &to_json(m)?)
}
