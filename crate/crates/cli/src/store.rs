//! Run-directory layout and deterministic artifact writing.
//!
//! Every run gets `<out_dir>/<command>-<hash8>/` holding the canonical
//! config copy, the CSV tables, a JSON summary, the CSV column schema,
//! a plain-text log, and a manifest tying each file to the config hash.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Column documentation for every table the binary can emit.
pub const CSV_SCHEMA: &str = include_str!("../assets/csv-schema.json");

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub struct ResultStore {
    dir: PathBuf,
    config_hash: String,
    files: Vec<String>,
    log: fs::File,
    started: Instant,
}

impl ResultStore {
    /// Create the run directory for `command`, keyed by the hash of the
    /// canonical config bytes, and persist the config copy + schema.
    pub fn create(out_dir: &Path, command: &str, config_toml: &str) -> Result<Self, StoreError> {
        let hash = hex_digest(config_toml.as_bytes());
        let dir = out_dir.join(format!("{command}-{}", &hash[..8]));
        fs::create_dir_all(&dir)?;
        let log = fs::File::create(dir.join("run.log"))?;
        let mut store = ResultStore {
            dir,
            config_hash: hash,
            files: Vec::new(),
            log,
            started: Instant::now(),
        };
        store.write_text("config.toml", config_toml)?;
        store.write_text("csv-schema.json", CSV_SCHEMA)?;
        store.log(&format!("run started ({command})"))?;
        Ok(store)
    }

    pub fn log(&mut self, msg: &str) -> Result<(), StoreError> {
        let dt = self.started.elapsed().as_secs_f64();
        writeln!(self.log, "[{dt:10.3}s] {msg}")?;
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), StoreError> {
        fs::write(self.dir.join(name), text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Write an RFC-4180 CSV table: a header row then records of uniform
    /// width. Floats use the shortest round-trip representation, so a
    /// rerun of the same config reproduces the bytes exactly.
    pub fn write_csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> Result<(), StoreError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_path(self.dir.join(name))?;
        w.write_record(header)?;
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            w.write_record(&row)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Write the JSON summary; the config hash and schema version ride
    /// along inside the document.
    pub fn write_summary<S: Serialize>(&mut self, body: &S) -> Result<(), StoreError> {
        #[derive(Serialize)]
        struct Envelope<'a, S> {
            schema_version: u32,
            config_hash: &'a str,
            #[serde(flatten)]
            body: &'a S,
        }
        let doc = Envelope {
            schema_version: SCHEMA_VERSION,
            config_hash: &self.config_hash,
            body,
        };
        let text = serde_json::to_string_pretty(&doc)?;
        self.write_text("summary.json", &text)
    }

    /// Seal the run: write the manifest listing every artifact with the
    /// config hash that produced it.
    pub fn finish(mut self) -> Result<PathBuf, StoreError> {
        self.log("run finished")?;
        #[derive(Serialize)]
        struct Manifest<'a> {
            schema_version: u32,
            config_hash: &'a str,
            files: &'a [String],
        }
        let mut files = self.files.clone();
        files.push("run.log".into());
        files.sort();
        let manifest = serde_json::to_string_pretty(&Manifest {
            schema_version: SCHEMA_VERSION,
            config_hash: &self.config_hash,
            files: &files,
        })?;
        fs::write(self.dir.join("manifest.json"), manifest)?;
        Ok(self.dir)
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Format a float for CSV output (shortest round-trip form).
pub fn fmt(x: f64) -> String {
    if x == 0.0 {
        "0".into() // normalize -0
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable() {
        assert_eq!(
            hex_digest(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn store_writes_manifest_and_csv() {
        let tmp = tempfile::tempdir().unwrap();
        let mut store = ResultStore::create(tmp.path(), "evolve", "x = 1\n").unwrap();
        store
            .write_csv(
                "curve.csv",
                &["t", "value"],
                vec![vec![fmt(0.0), fmt(1.0)], vec![fmt(0.5), fmt(0.25)]],
            )
            .unwrap();
        store.write_summary(&serde_json::json!({"ok": true})).unwrap();
        let dir = store.finish().unwrap();
        let csv = fs::read_to_string(dir.join("curve.csv")).unwrap();
        assert_eq!(csv, "t,value\r\n0,1\r\n0.5,0.25\r\n");
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
        assert!(manifest["files"]
            .as_array()
            .unwrap()
            .iter()
            .any(|f| f == "curve.csv"));
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["ok"], true);
        assert_eq!(summary["config_hash"], manifest["config_hash"]);
    }
}
