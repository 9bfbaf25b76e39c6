//! Output directory handling: lock file, CSV/plot/JSON writers and the run
//! manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const LOCK_FILE: &str = ".loggas.lock";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Holds the output directory for one process; released on drop.
pub struct OutputDir {
    root: PathBuf,
    lock: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn acquire(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        let lock = root.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(CliError::Busy(lock));
            }
            Err(e) => return Err(CliError::io(&lock, e)),
        }
        Ok(OutputDir {
            root: root.to_path_buf(),
            lock,
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Files written so far, relative to the root, in write order.
    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn write(&mut self, rel: &str, contents: &str) -> Result<(), CliError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        if !self.written.iter().any(|w| w == rel) {
            self.written.push(rel.to_string());
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        self.write(rel, &text)
    }

    pub fn write_csv(&mut self, rel: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            push_joined(&mut text, row, ',');
        }
        self.write(rel, &text)
    }

    /// Whitespace-separated columns with a `#` header line.
    pub fn write_plot(&mut self, rel: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
        let mut text = format!("# {}\n", header.join(" "));
        for row in rows {
            push_joined(&mut text, row, ' ');
        }
        self.write(rel, &text)
    }
}

fn push_joined(text: &mut String, row: &[f64], sep: char) {
    for (k, v) in row.iter().enumerate() {
        if k > 0 {
            text.push(sep);
        }
        write!(text, "{v}").expect("writing to a string");
    }
    text.push('\n');
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// SHA-256 of the effective config (after overrides), hex encoded.
    pub config_hash: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub wall_time_seconds: f64,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
    pub headline: BTreeMap<String, f64>,
}

/// Two-column table for stdout.
#[derive(Default)]
pub struct Table {
    rows: Vec<(String, String)>,
}

impl Table {
    pub fn row(&mut self, key: impl Into<String>, value: impl std::fmt::Display) {
        self.rows.push((key.into(), value.to_string()));
    }

    /// Numbers print in full, switching to scientific notation when tiny.
    pub fn num(&mut self, key: impl Into<String>, value: f64) {
        if value != 0.0 && value.abs() < 1e-3 {
            self.row(key, format!("{value:e}"));
        } else {
            self.row(key, value);
        }
    }

    pub fn extend(&mut self, other: Table) {
        self.rows.extend(other.rows);
    }

    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in &self.rows {
            writeln!(out, "{k:<width$}  {v}").expect("writing to a string");
        }
        out
    }
}
