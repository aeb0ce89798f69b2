use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to rerun a command. The timestamp lives here and only
/// here, so every other output is byte-identical across reruns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    /// Resolved configuration after defaults and flag overrides.
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub timestamp_unix: u64,
    /// Set when the command failed after writing some outputs.
    pub partial: bool,
    pub error: Option<String>,
}

/// Collects outputs while a command runs and writes the manifest at the end,
/// whether the command succeeded or not.
pub struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    pub fn start(command: &str, dir: &Path, config_path: Option<&Path>, seed: u64) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Run {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                command: command.to_string(),
                config_path: config_path.map(Path::to_path_buf),
                config: serde_json::Value::Null,
                seed,
                inputs: Vec::new(),
                outputs: Vec::new(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                timestamp_unix: 0,
                partial: false,
                error: None,
            },
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.to_path_buf());
    }

    pub fn config<T: Serialize>(&mut self, config: &T) -> Result<()> {
        self.manifest.config = serde_json::to_value(config)?;
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Records a file that has been fully written.
    pub fn wrote(&mut self, path: PathBuf) {
        self.manifest.outputs.push(path);
    }

    pub fn finish<T>(mut self, result: Result<T>) -> Result<T> {
        self.manifest.timestamp_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        if let Err(e) = &result {
            self.manifest.partial = true;
            self.manifest.error = Some(format!("{e:#}"));
        }
        let path = self.dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        let written = fs::write(&path, text).with_context(|| format!("writing {}", path.display()));
        let value = result?;
        written?;
        Ok(value)
    }
}
