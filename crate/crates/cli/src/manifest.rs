use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
}

/// Everything needed to rerun an experiment; written before the run starts
/// and rewritten when it ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config: RunConfig,
    pub seeds: Seeds,
    pub version: String,
    pub started: String,
    pub finished: Option<String>,
    pub status: RunStatus,
    pub outputs: Vec<String>,
    pub results: Value,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(config: &RunConfig) -> Self {
        RunManifest {
            experiment: config.experiment.name().into(),
            config: config.clone(),
            seeds: Seeds { master: config.seed },
            version: env!("CARGO_PKG_VERSION").into(),
            started: now(),
            finished: None,
            status: RunStatus::Running,
            outputs: vec![MANIFEST.into()],
            results: Value::Null,
            error: None,
        }
    }

    /// Pretty JSON; object keys come out sorted.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("manifest serializes");
        serde_json::to_string_pretty(&value).expect("value serializes") + "\n"
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST);
        std::fs::write(&path, self.to_json()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<RunManifest, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
    }
}

pub fn now() -> String {
    chrono::Utc::now().format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string()
}

/// `<out>/<experiment>/<timestamp>-<seed>`, with a numeric suffix if that
/// directory already exists.
pub fn create_run_dir(out: &Path, config: &RunConfig) -> Result<PathBuf, CliError> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = out.join(config.experiment.name()).join(format!("{stamp}-{}", config.seed));
    let mut dir = base.clone();
    let mut k = 1;
    while dir.exists() {
        dir = PathBuf::from(format!("{}-{k}", base.display()));
        k += 1;
    }
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Experiment;

    #[test]
    fn json_keys_sorted_and_round_trip() {
        let m = RunManifest::new(&RunConfig::defaults(Experiment::Fig5));
        let text = m.to_json();
        let keys: Vec<&str> = text
            .lines()
            .filter(|l| l.starts_with("  \"") && !l.starts_with("   "))
            .map(|l| l.trim().split('"').nth(1).unwrap())
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
