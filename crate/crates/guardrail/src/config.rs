use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::ValidationPolicy;
use crate::provider::PeerProviderConfig;

pub const DATA_DIR_ENV: &str = "GUARDRAIL_DATA_DIR";

/// JSON configuration file; every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    /// Directory of dataset JSON files served by `serve`; precomputed sets
    /// live under `<data_dir>/precomputed`.
    pub data_dir: PathBuf,
    pub bind: String,
    pub provider: PeerProviderConfig,
    pub validation: ValidationPolicy,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data/datasets"),
            bind: "127.0.0.1:8080".into(),
            provider: PeerProviderConfig::default(),
            validation: ValidationPolicy::default(),
        }
    }
}

impl AppConfig {
    /// Reads `path` if given, then applies the data-dir environment override.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut config = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| anyhow::anyhow!("reading config {}: {e}", path.display()))?;
                serde_json::from_str(&text)?
            }
            None => Self::default(),
        };
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            config.data_dir = dir.into();
        }
        Ok(config)
    }

    pub fn precomputed_dir(&self) -> PathBuf {
        self.data_dir.join("precomputed")
    }
}
