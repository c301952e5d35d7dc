//! Output directories, CSV tables and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::ledger::HASH_ALGORITHM;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Outcome of one property check; the CLI exits nonzero if any fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Everything needed to rerun a scenario and confirm its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub verb: String,
    pub seed: u64,
    pub code_version: String,
    pub hash_algorithm: String,
    /// Extra positional input, such as a ledger dump.
    pub input: Option<PathBuf>,
    pub config: ScenarioConfig,
    /// Output file name to SHA-256 hex digest.
    pub outputs: BTreeMap<String, String>,
    pub checks: Vec<Check>,
}

impl Manifest {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// A scenario's private output directory.
#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
    outputs: BTreeMap<String, String>,
}

impl RunDir {
    pub fn create(path: &Path) -> Result<Self> {
        fs::create_dir_all(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self {
            path: path.to_path_buf(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io {
            path: self.file(name),
            source: e.into_error(),
        })?;
        self.write_bytes(name, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.file(name);
        fs::write(&path, bytes).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    /// Records a file some other writer produced.
    pub fn register(&mut self, name: &str) -> Result<()> {
        let path = self.file(name);
        let bytes = fs::read(&path).map_err(|source| Error::Io { path, source })?;
        self.outputs.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    /// Writes the manifest last so that it lists every output.
    pub fn finish(
        self,
        verb: &str,
        config: &ScenarioConfig,
        input: Option<PathBuf>,
        checks: Vec<Check>,
    ) -> Result<Manifest> {
        let manifest = Manifest {
            verb: verb.to_string(),
            seed: config.seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            hash_algorithm: HASH_ALGORITHM.to_string(),
            input,
            config: config.clone(),
            outputs: self.outputs,
            checks,
        };
        let path = self.path.join(MANIFEST_FILE);
        let mut file = fs::File::create(&path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        serde_json::to_writer_pretty(&mut file, &manifest)?;
        file.write_all(b"\n").map_err(|source| Error::Io { path, source })?;
        Ok(manifest)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        a: u32,
        b: f64,
    }

    #[test]
    fn manifest_lists_every_output() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(&dir.path().join("x")).unwrap();
        run.write_csv("t.csv", &[Row { a: 1, b: 0.5 }, Row { a: 2, b: 1e-3 }]).unwrap();
        run.write_json("v.json", &[1, 2]).unwrap();
        let text = fs::read_to_string(run.file("t.csv")).unwrap();
        assert_eq!(text, "a,b\n1,0.5\n2,0.001\n");
        let m = run
            .finish("test", &ScenarioConfig::default(), None, vec![Check::new("ok", true, "")])
            .unwrap();
        assert!(m.passed());
        assert_eq!(m.outputs.len(), 2);
        assert_eq!(m.outputs["t.csv"], sha256_hex(text.as_bytes()));
        let back = Manifest::load(&dir.path().join("x").join(MANIFEST_FILE)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
