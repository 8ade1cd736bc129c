//! Report files and the run manifest.
//!
//! Every command produces one [`Report`], written as `<command>.json` and
//! `<command>.tsv`. The JSON schema is
//!
//! ```text
//! { "command": string,
//!   "config":  object,           // the run configuration without output_dir and thread_count
//!   "summary": object,           // keys in sorted order
//!   "columns": [string],
//!   "rows":    [[value]] }
//! ```
//!
//! The TSV file starts with one `# key = value` line per summary entry,
//! followed by a header row and the data rows. Neither file contains
//! timestamps or timings; those live only in `<command>.manifest.json`,
//! which is written after every other file of the run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Tabular result of one command.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub summary: BTreeMap<String, Value>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Report {
    pub fn new(command: &str, columns: &[&str]) -> Self {
        Self { command: command.into(), columns: columns.iter().map(|c| c.to_string()).collect(), ..Self::default() }
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.into(), value.into());
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_json(&self, cfg: &RunConfig) -> String {
        let mut config = serde_json::to_value(cfg).expect("configuration serializes");
        if let Value::Object(m) = &mut config {
            m.remove("output_dir");
            m.remove("thread_count");
        }
        let doc = json!({
            "command": self.command,
            "config": config,
            "summary": self.summary,
            "columns": self.columns,
            "rows": self.rows,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.summary {
            let _ = writeln!(s, "# {k} = {}", cell(v));
        }
        s.push_str(&self.columns.join("\t"));
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(cell).collect();
            s.push_str(&cells.join("\t"));
            s.push('\n');
        }
        s
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// The instance behind a failed assertion.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Reproducer {
    pub command: String,
    pub seed: u64,
    pub message: String,
    pub instance: Value,
}

/// One stage of a run and its wall-clock time.
#[derive(Clone, Debug, Serialize)]
pub struct StageTiming {
    pub name: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Provenance of one run.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub created_unix_ms: u128,
    pub stages: Vec<StageTiming>,
    pub files: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects the files of a run and finishes with the manifest.
pub struct ArtifactWriter {
    dir: PathBuf,
    command: String,
    files: Vec<FileDigest>,
    stages: Vec<StageTiming>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path, command: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), command: command.into(), files: Vec::new(), stages: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push(FileDigest {
            path: name.into(),
            bytes: contents.len() as u64,
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(path)
    }

    pub fn stage(&mut self, name: &str, elapsed: Duration) {
        self.stages.push(StageTiming { name: name.into(), seconds: elapsed.as_secs_f64() });
    }

    /// Writes `<command>.json` and `<command>.tsv`.
    pub fn emit_report(&mut self, report: &Report, cfg: &RunConfig) -> Result<()> {
        self.write(&format!("{}.json", report.command), &report.to_json(cfg))?;
        self.write(&format!("{}.tsv", report.command), &report.to_tsv())?;
        Ok(())
    }

    pub fn emit_reproducer(&mut self, rep: &Reproducer) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(rep).expect("reproducer serializes");
        s.push('\n');
        self.write(&format!("{}.reproducer.json", self.command), &s)
    }

    /// Writes the manifest; nothing may be written after it.
    pub fn finish(self, cfg: &RunConfig) -> Result<PathBuf> {
        let manifest = RunManifest {
            tool: "divlab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.clone(),
            config_sha256: sha256_hex(cfg.to_toml().as_bytes()),
            created_unix_ms: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis()),
            stages: self.stages,
            files: self.files,
        };
        let path = self.dir.join(format!("{}.manifest.json", self.command));
        let mut s = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        s.push('\n');
        std::fs::write(&path, s).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}
