//! Run manifests: configuration, seeds and file digests of one invocation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{PathContext, Result};

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let data = std::fs::read(path).at(path)?;
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: hex::encode(Sha256::digest(&data)),
        bytes: data.len() as u64,
    })
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub versions: BTreeMap<String, String>,
    /// Wall-clock milliseconds per phase.
    pub timings_ms: BTreeMap<String, f64>,
    #[serde(skip)]
    started: Option<Instant>,
    #[serde(skip)]
    input_paths: Vec<PathBuf>,
    #[serde(skip)]
    output_paths: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, config: &C) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("ghostgrid".into(), ghostgrid::VERSION.into());
        versions.insert("ghostgrid-cli".into(), env!("CARGO_PKG_VERSION").into());
        versions.insert("model-format".into(), ghostgrid::modelio::FORMAT_VERSION.to_string());
        Self {
            command: command.into(),
            argv: std::env::args().collect(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            versions,
            timings_ms: BTreeMap::new(),
            started: Some(Instant::now()),
            input_paths: Vec::new(),
            output_paths: Vec::new(),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.seeds.insert(name.into(), value);
        self
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.input_paths.push(path.to_path_buf());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.output_paths.push(path.to_path_buf());
        self
    }

    pub fn time(&mut self, phase: &str, d: Duration) -> &mut Self {
        self.timings_ms.insert(phase.into(), d.as_secs_f64() * 1e3);
        self
    }

    /// Digests every registered file and writes the manifest.
    pub fn write(mut self, path: &Path) -> Result<()> {
        if let Some(c) = crate::config::active() {
            self.input_paths.insert(0, c.to_path_buf());
        }
        self.inputs = self.input_paths.iter().map(|p| digest_file(p)).collect::<Result<_>>()?;
        self.outputs = self.output_paths.iter().map(|p| digest_file(p)).collect::<Result<_>>()?;
        if let Some(t) = self.started {
            self.timings_ms.insert("total".into(), t.elapsed().as_secs_f64() * 1e3);
        }
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(path, text + "\n").at(path)
    }
}

/// `<primary>.manifest.json`, or the explicit override.
pub fn manifest_path(explicit: &Option<PathBuf>, primary: &Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        let mut s = primary.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    })
}
