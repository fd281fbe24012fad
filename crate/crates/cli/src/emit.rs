//! Deterministic file emission: CSV with a fixed numeric format, JSON
//! records, and a manifest. Every file is written to a temp path and
//! renamed into place; every file carries the config hash.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{CliError, Result};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits, scientific: round-trips f64 bit-exactly.
pub fn g17(x: f64) -> String {
    format!("{x:.16e}")
}

pub enum Field {
    U(u64),
    F(f64),
    S(String),
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::U(v) => v.to_string(),
            Field::F(v) => g17(*v),
            Field::S(v) => v.clone(),
        }
    }
}

/// In-memory CSV: `# config_hash=` comment, header row, then data rows,
/// '\n' endings throughout.
pub struct Csv {
    name: String,
    columns: usize,
    text: String,
}

impl Csv {
    pub fn new(name: &str, config_hash: &str, columns: &[&str]) -> Csv {
        let mut text = format!("# config_hash={config_hash}\n");
        text.push_str(&columns.join(","));
        text.push('\n');
        Csv { name: name.to_string(), columns: columns.len(), text }
    }

    pub fn row(&mut self, fields: &[Field]) {
        assert_eq!(fields.len(), self.columns, "row width mismatch in {}", self.name);
        let rendered: Vec<String> = fields.iter().map(Field::render).collect();
        self.text.push_str(&rendered.join(","));
        self.text.push('\n');
    }
}

/// Collects emitted files for one command invocation and finishes with a
/// manifest naming them all.
pub struct Emitter {
    out_dir: PathBuf,
    config_hash: String,
    files: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: &'a str,
    toolkit_version: &'a str,
    seeds: &'a [u64],
    files: &'a [String],
    config: serde_json::Value,
}

impl Emitter {
    pub fn new(out_dir: &Path, config_hash: &str) -> Result<Emitter> {
        fs::create_dir_all(out_dir).map_err(|e| {
            CliError::Config(format!("cannot create {}: {e}", out_dir.display()))
        })?;
        Ok(Emitter {
            out_dir: out_dir.to_path_buf(),
            config_hash: config_hash.to_string(),
            files: Vec::new(),
        })
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn csv(&self, name: &str, columns: &[&str]) -> Csv {
        Csv::new(name, &self.config_hash, columns)
    }

    pub fn write_csv(&mut self, csv: Csv) -> Result<()> {
        self.write_atomic(&csv.name.clone(), csv.text.as_bytes())
    }

    /// JSON record; the value must already embed the config hash where its
    /// schema calls for one.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Invariant(format!("serialize {name}: {e}")))?;
        text.push('\n');
        self.write_atomic(name, text.as_bytes())
    }

    /// Closes the invocation: writes `manifest.json` echoing the config,
    /// the seeds used, and the emitted file list.
    pub fn finish(mut self, command: &str, seeds: &[u64], config: serde_json::Value) -> Result<()> {
        let hash = self.config_hash.clone();
        let files = self.files.clone();
        let manifest = Manifest {
            command,
            config_hash: &hash,
            toolkit_version: TOOLKIT_VERSION,
            seeds,
            files: &files,
            config,
        };
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Invariant(format!("serialize manifest: {e}")))?;
        text.push('\n');
        self.write_atomic("manifest.json", text.as_bytes())
    }

    fn write_atomic(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let tmp = self.out_dir.join(format!(".tmp.{name}"));
        let fin = self.out_dir.join(name);
        let io = (|| {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, &fin)
        })();
        io.map_err(|e| CliError::Config(format!("cannot write {}: {e}", fin.display())))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_round_trips() {
        for &x in &[0.1, 1.0 / 3.0, 2.0f64.ln(), 1e-300, 6.02e23] {
            assert_eq!(g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_layout() {
        let mut c = Csv::new("t.csv", "abc", &["m", "tv"]);
        c.row(&[Field::U(3), Field::F(0.5)]);
        assert_eq!(c.text, "# config_hash=abc\nm,tv\n3,5.0000000000000000e-1\n");
    }
}
