//! CSV tables and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    /// Reals are written with 17 significant digits so that they round-trip.
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// A CSV table with `#`-prefixed comment lines above the header.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub comments: Vec<String>,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Self {
        Self {
            name: name.to_string(),
            comments: Vec::new(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) {
        self.comments.push(line.into());
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.header.len(),
            "row width does not match header of {}",
            self.name
        );
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for c in &self.comments {
            writeln!(out, "# {c}").unwrap();
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header).unwrap();
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).unwrap();
        }
        w.into_inner().expect("in-memory writer")
    }

    /// Writes `<dir>/<name>.csv` and returns the path and content hash.
    pub fn write(&self, dir: &Path) -> io::Result<OutputFile> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.csv", self.name));
        let bytes = self.to_bytes();
        fs::write(&path, &bytes)?;
        Ok(OutputFile {
            path,
            rows: self.rows.len(),
            sha256: blob_hash(&bytes),
        })
    }
}

/// Git-style content hash: SHA-256 of `blob <len>\0<bytes>`.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct OutputFile {
    pub path: PathBuf,
    pub rows: usize,
    pub sha256: String,
}

/// A random stream family consumed by a run.
#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct SeedEntry {
    pub run: String,
    pub purpose: String,
    pub seed: u64,
    /// Replicate stream indices read from the seed, e.g. `0..10000`.
    pub streams: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub name: String,
    pub experiment: String,
    pub config: BTreeMap<String, String>,
    pub outputs: Vec<OutputFile>,
    pub checks: usize,
    pub failures: Vec<String>,
    pub wall_clock_seconds: f64,
}

/// Written to `<output_dir>/manifest.json` after every run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_path: Option<PathBuf>,
    pub config_hash: String,
    pub threads: usize,
    pub runs: Vec<RunRecord>,
    pub seed_ledger: Vec<SeedEntry>,
    pub wall_clock_seconds: f64,
    pub passed: bool,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> io::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_git_sha256() {
        // `git hash-object --object-format=sha256` of the empty file
        assert_eq!(
            blob_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }

    #[test]
    fn table_layout() {
        let mut t = Table::new("x", &["a", "label"]);
        t.comment("tolerance 0.05");
        t.push(vec![0.1.into(), "p,q".into()]);
        let text = String::from_utf8(t.to_bytes()).unwrap();
        assert_eq!(
            text,
            "# tolerance 0.05\na,label\n1.0000000000000001e-1,\"p,q\"\n"
        );
    }
}
