//! Deterministic CSV emission plus a JSON sidecar describing the run.
//!
//! CSV bodies are byte-reproducible given (config, seed); the sidecar is the
//! only place a timestamp appears.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Formats a float with 12 significant digits, locale-independent.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        // Collapse -0 so equal values always print identically.
        return "0.00000000000e0".to_string();
    }
    format!("{:.11e}", x)
}

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_header(header: Vec<String>) -> Self {
        Table {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "ragged row");
        self.rows.push(row);
    }

    /// Renders to CSV bytes: single header row, '\n' terminators.
    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner().context("csv buffer")
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    command: &'a str,
    tool_version: &'a str,
    config: &'a RunConfig,
    rows: usize,
    /// SHA-256 of the CSV bytes; the reproducibility fingerprint.
    csv_sha256: String,
    /// Wall-clock seconds; informational only, exempt from determinism.
    created_unix_s: u64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Writes `<out>/<name>.csv` and `<out>/<name>.json`, returning the CSV path.
pub fn write_outputs(
    out_dir: &Path,
    name: &str,
    table: &Table,
    command: &str,
    config: &RunConfig,
) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let csv_bytes = table.to_csv_bytes()?;
    let csv_path = out_dir.join(format!("{name}.csv"));
    fs::write(&csv_path, &csv_bytes)
        .with_context(|| format!("writing {}", csv_path.display()))?;

    let sidecar = Sidecar {
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        config,
        rows: table.rows.len(),
        csv_sha256: sha256_hex(&csv_bytes),
        created_unix_s: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let json_path = out_dir.join(format!("{name}.json"));
    fs::write(&json_path, serde_json::to_string_pretty(&sidecar)?)
        .with_context(|| format!("writing {}", json_path.display()))?;
    Ok(csv_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits_and_stable_zero() {
        assert_eq!(sig12(0.6901234567894321), "6.90123456789e-1");
        assert_eq!(sig12(1.0), "1.00000000000e0");
        assert_eq!(sig12(0.0), "0.00000000000e0");
        assert_eq!(sig12(-0.0), "0.00000000000e0");
        assert_eq!(sig12(-3.5e-7), "-3.50000000000e-7");
    }

    #[test]
    fn csv_bytes_have_single_header_and_newline_rows() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), "2".into()]);
        let bytes = t.to_csv_bytes().unwrap();
        assert_eq!(String::from_utf8(bytes).unwrap(), "a,b\n1,2\n");
    }
}
