//! Artifacts of one run: SSVF1 dumps, CSV tables with round-trip precision,
//! and the manifest that lists each of them with its hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use selfsim_core::{io, Profile};

use crate::config::RunConfig;
use crate::error::CliError;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// One CSV cell.
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => fmt_f64(*x),
            Cell::I(i) => i.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub status: String,
    pub config_sha256: String,
    pub config: RunConfig,
    pub versions: BTreeMap<String, String>,
    pub seed: u64,
    pub workers: Option<usize>,
    pub wall_time_seconds: f64,
    pub metrics: BTreeMap<String, Value>,
    pub artifacts: Vec<Artifact>,
}

/// Collects the files written by one command.
pub struct RunOutput {
    pub dir: PathBuf,
    pub artifacts: Vec<Artifact>,
    pub metrics: BTreeMap<String, Value>,
}

impl RunOutput {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("cannot create {}: {e}", dir.display())))?;
        Ok(RunOutput {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
            metrics: BTreeMap::new(),
        })
    }

    fn record(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.artifacts.retain(|a| a.path != name);
        self.artifacts.push(Artifact {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<Cell>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
        self.record(name, &bytes)
    }

    pub fn dump<const C: usize>(&mut self, name: &str, p: &Profile<C>) -> Result<(), CliError> {
        let mut buf = Vec::new();
        io::write_profile(p, &mut buf)?;
        self.record(name, &buf)
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        self.record(name, body.as_bytes())
    }

    pub fn metric(&mut self, key: &str, value: impl Into<Value>) {
        self.metrics.insert(key.to_string(), value.into());
    }

    /// Write `manifest-<command>.json` and return its path.
    pub fn finish(
        self,
        command: &str,
        status: &str,
        cfg: &RunConfig,
        wall_time_seconds: f64,
    ) -> Result<PathBuf, CliError> {
        let mut versions = BTreeMap::new();
        versions.insert("selfsim-core".to_string(), selfsim_core::VERSION.to_string());
        versions.insert("selfsim-cli".to_string(), env!("CARGO_PKG_VERSION").to_string());
        let manifest = Manifest {
            command: command.to_string(),
            status: status.to_string(),
            config_sha256: sha256_hex(cfg.to_text().as_bytes()),
            config: cfg.clone(),
            versions,
            seed: cfg.run.seed,
            workers: cfg.run.workers,
            wall_time_seconds,
            metrics: self.metrics,
            artifacts: self.artifacts,
        };
        let path = self.dir.join(format!("manifest-{command}.json"));
        let body = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Output(e.to_string()))?;
        std::fs::write(&path, body)?;
        Ok(path)
    }
}

/// Flatten JSON into sorted `a.b.c = value` lines.
pub fn key_value_text(v: &Value) -> String {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<String>) {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&p, x, out);
                }
            }
            Value::Array(a) => {
                for (i, x) in a.iter().enumerate() {
                    walk(&format!("{prefix}.{i}"), x, out);
                }
            }
            Value::Number(n) => match n.as_f64() {
                Some(f) if !n.is_i64() && !n.is_u64() => out.push(format!("{prefix} = {}", fmt_f64(f))),
                _ => out.push(format!("{prefix} = {n}")),
            },
            other => out.push(format!("{prefix} = {other}")),
        }
    }
    let mut lines = Vec::new();
    walk("", v, &mut lines);
    lines.join("\n") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn sha256_of_empty() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn flattening() {
        let v = serde_json::json!({"b": {"x": 1.5, "n": 3}, "a": [true, "s"]});
        assert_eq!(key_value_text(&v), "a.0 = true\na.1 = \"s\"\nb.n = 3\nb.x = 1.5000000000000000e0\n");
    }
}
