//! Run reports: buffered CSV and JSON artifacts written atomically at the end.

use std::path::{Path, PathBuf};

use anyhow::Context;
use degen_core::report::csv_float;
use serde::Serialize;
use serde_json::Value;

/// One asserted property of a run.
#[derive(Debug, Clone, Serialize)]
pub struct Invariant {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Everything a subcommand produces.
#[derive(Debug)]
pub struct Report {
    pub subcommand: &'static str,
    pub invariants: Vec<Invariant>,
    pub results: serde_json::Map<String, Value>,
    files: Vec<(String, Vec<u8>)>,
}

#[derive(Serialize)]
struct Summary<'a> {
    subcommand: &'a str,
    config_hash: &'a str,
    seed: u64,
    passed: bool,
    invariants: &'a [Invariant],
    results: &'a serde_json::Map<String, Value>,
    files: Vec<&'a str>,
}

impl Report {
    pub fn new(subcommand: &'static str) -> Self {
        Self {
            subcommand,
            invariants: Vec::new(),
            results: serde_json::Map::new(),
            files: Vec::new(),
        }
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.invariants.push(Invariant {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn result(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("report values serialize");
        self.results.insert(key.to_string(), v);
    }

    pub fn file(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    /// Adds a CSV built from a header and rows of pre-formatted fields.
    pub fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I)
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        for row in rows {
            w.write_record(row).expect("in-memory write");
        }
        self.file(name, w.into_inner().expect("in-memory flush"));
    }

    pub fn passed(&self) -> bool {
        self.invariants.iter().all(|i| i.passed)
    }

    /// Writes the buffered files and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path, config_hash: &str, seed: u64) -> anyhow::Result<Vec<PathBuf>> {
        let summary = Summary {
            subcommand: self.subcommand,
            config_hash,
            seed,
            passed: self.passed(),
            invariants: &self.invariants,
            results: &self.results,
            files: self.files.iter().map(|(n, _)| n.as_str()).collect(),
        };
        let mut json = serde_json::to_vec_pretty(&summary)?;
        json.push(b'\n');
        let mut written = Vec::new();
        for (name, bytes) in self.files.iter().map(|(n, b)| (n.as_str(), b)).chain([("summary.json", &json)]) {
            written.push(write_atomic(dir, name, bytes)?);
        }
        Ok(written)
    }
}

/// Writes `bytes` to a temporary file in `dir`, then renames it into place.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
    use std::io::Write;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    let path = dir.join(name);
    tmp.persist(&path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn f(v: f64) -> String {
    csv_float(v)
}

pub fn opt(v: Option<f64>) -> String {
    v.map(csv_float).unwrap_or_default()
}
