use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::{CliError, Format};

/// JSON envelope of every artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub config_hash: String,
    pub command: String,
    pub data: T,
}

pub fn read_artifact<T: DeserializeOwned>(path: &Path) -> Result<Artifact<T>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("malformed {}: {e}", path.display())))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: &'a str,
    version: Versions,
    seeds: &'a BTreeMap<String, Vec<u64>>,
    outputs: &'a [String],
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct Versions {
    layerlock: &'static str,
    artifact_format: u32,
}

/// Collects what a command writes and its seeds.
pub struct Output {
    dir: PathBuf,
    command: &'static str,
    hash: String,
    files: Vec<String>,
    seeds: BTreeMap<String, Vec<u64>>,
    primary_csv: Option<String>,
    primary_json: Option<String>,
}

impl Output {
    pub fn new(dir: &Path, command: &'static str, hash: String) -> Self {
        Self {
            dir: dir.to_path_buf(),
            command,
            hash,
            files: Vec::new(),
            seeds: BTreeMap::new(),
            primary_csv: None,
            primary_json: None,
        }
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn seeds(&mut self, stream: &str, seeds: &[u64]) {
        self.seeds.insert(stream.to_string(), seeds.to_vec());
    }

    pub fn record(&mut self, file: &str) {
        self.files.push(file.to_string());
    }

    fn write(&mut self, file: &str, content: &str) -> Result<(), CliError> {
        let path = self.dir.join(file);
        std::fs::write(&path, content).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.record(file);
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &str, rows: Vec<String>) -> Result<(), CliError> {
        let mut s = format!("# config_hash={}\n{header}\n", self.hash);
        for r in rows {
            s.push_str(&r);
            s.push('\n');
        }
        self.write(&format!("{name}.csv"), &s)?;
        self.primary_csv.get_or_insert(s);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, data: &T) -> Result<(), CliError> {
        let artifact = Artifact {
            config_hash: self.hash.clone(),
            command: self.command.to_string(),
            data,
        };
        let mut s = serde_json::to_string_pretty(&artifact).map_err(|e| CliError::Runtime(e.to_string()))?;
        s.push('\n');
        self.write(&format!("{name}.json"), &s)?;
        self.primary_json.get_or_insert(s);
        Ok(())
    }

    pub fn text(&mut self, file: &str, content: &str) -> Result<(), CliError> {
        self.write(file, content)
    }

    pub fn write_manifest(&mut self, config: &ExperimentConfig) -> Result<(), CliError> {
        let manifest = Manifest {
            command: self.command,
            config_hash: &self.hash,
            version: Versions {
                layerlock: env!("CARGO_PKG_VERSION"),
                artifact_format: 1,
            },
            seeds: &self.seeds,
            outputs: &self.files,
            config,
        };
        let mut s = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
        s.push('\n');
        let path = self.dir.join(format!("{}.manifest.json", self.command));
        std::fs::write(&path, s).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
    }

    /// The first artifact written, in the requested format.
    pub fn primary(&self, format: Format) -> String {
        match format {
            Format::Csv => self.primary_csv.clone(),
            Format::Json => self.primary_json.clone(),
        }
        .unwrap_or_default()
    }
}
