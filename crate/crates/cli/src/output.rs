//! Manifests and table/record writers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Run description. Only `tool`, `version`, `command` and `config` enter the hash,
/// so timing never changes output bytes.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub derived_seeds: Vec<(String, u64)>,
    pub wall_time_s: f64,
    pub hash: String,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        let tool = env!("CARGO_PKG_NAME");
        let version = env!("CARGO_PKG_VERSION");
        let canonical = serde_json::json!({ "tool": tool, "version": version, "command": command, "config": config });
        let hash = format!("{:x}", Sha256::digest(canonical.to_string().as_bytes()));
        Self { tool, version, command: command.into(), config, seed, derived_seeds: Vec::new(), wall_time_s: 0.0, hash }
    }

    pub fn schema(&self) -> String {
        format!("hopfix/{}/v{SCHEMA_VERSION}", self.command)
    }
}

/// Location of the manifest that accompanies `out`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

pub fn write_manifest(out: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(manifest_path(out), text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", out.display())))
}

/// Buffered text output with a schema/manifest header.
pub struct Sink {
    buf: String,
}

impl Sink {
    pub fn csv(manifest: &RunManifest, columns: &[&str]) -> Self {
        let mut buf = format!("# schema={} manifest={}\n", manifest.schema(), manifest.hash);
        buf.push_str(&columns.join(","));
        buf.push('\n');
        Self { buf }
    }

    pub fn jsonl(manifest: &RunManifest) -> Self {
        let header = serde_json::json!({ "schema": manifest.schema(), "manifest": manifest.hash });
        Self { buf: format!("{header}\n") }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.buf.push_str(&cells.join(","));
        self.buf.push('\n');
    }

    pub fn record<T: Serialize>(&mut self, value: &T) -> Result<(), CliError> {
        let line = serde_json::to_string(value).map_err(|e| CliError::Io(e.to_string()))?;
        self.buf.push_str(&line);
        self.buf.push('\n');
        Ok(())
    }

    pub fn finish(self, out: Option<&Path>) -> Result<(), CliError> {
        match out {
            Some(path) => fs::write(path, self.buf).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
            None => std::io::stdout().lock().write_all(self.buf.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
        }
    }
}

/// 17 significant digits.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), num)
}

/// Indices as a `;`-separated cell so they do not clash with the column separator.
pub fn index_list(ix: &[usize]) -> String {
    ix.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}
