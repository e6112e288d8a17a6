//! Run manifests: one JSON record per command invocation, written atomically
//! next to the primary output, capturing the resolved configuration, input
//! and output hashes, and wall-clock timing.

use std::path::{Path, PathBuf};
use std::time::Instant;

use expevo::util::{fnv1a_hex, write_atomic};
use serde::Serialize;

#[derive(Serialize)]
struct Artifact {
    path: String,
    fnv1a: String,
}

#[derive(Serialize)]
pub struct RunManifest {
    command: String,
    version: String,
    seed: Option<u64>,
    config: serde_json::Value,
    inputs: Vec<Artifact>,
    outputs: Vec<Artifact>,
    started_unix: i64,
    wall_secs: f64,
}

pub struct ManifestBuilder {
    command: String,
    seed: Option<u64>,
    config: serde_json::Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
    started_unix: i64,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            seed: None,
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
            started_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs() as i64)
                .unwrap_or(0),
        }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn config<T: Serialize>(&mut self, config: &T) -> &mut Self {
        self.config = serde_json::to_value(config).unwrap_or(serde_json::Value::Null);
        self
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    /// Hash all artifacts and write the manifest beside the primary output:
    /// `manifest.json` inside a directory target, `<file>.manifest.json`
    /// otherwise.
    pub fn write(&self, primary: &Path) -> expevo::Result<PathBuf> {
        let hash_of = |p: &PathBuf| -> Artifact {
            let digest = std::fs::read(p).map(|b| fnv1a_hex(&b)).unwrap_or_default();
            Artifact {
                path: p.display().to_string(),
                fnv1a: digest,
            }
        };
        let manifest = RunManifest {
            command: self.command.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            config: self.config.clone(),
            inputs: self.inputs.iter().map(hash_of).collect(),
            outputs: self.outputs.iter().map(hash_of).collect(),
            started_unix: self.started_unix,
            wall_secs: self.started.elapsed().as_secs_f64(),
        };
        let path = if primary.is_dir() {
            primary.join("manifest.json")
        } else {
            primary.with_file_name(format!(
                "{}.manifest.json",
                primary
                    .file_name()
                    .map(|n| n.to_string_lossy().to_string())
                    .unwrap_or_else(|| "run".into())
            ))
        };
        write_atomic(&path, &serde_json::to_vec_pretty(&manifest)?)?;
        Ok(path)
    }
}
