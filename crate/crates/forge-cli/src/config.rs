//! TOML config file: endpoint registry plus defaults. Flags always win over
//! config values; secrets are only ever named (env var), never stored.

use anyhow::{Context, Result};
use forge_core::bench::client::ModelEndpoint;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Default, Deserialize)]
pub struct ConfigFile {
    #[serde(default)]
    pub defaults: Defaults,
    #[serde(default)]
    pub endpoints: BTreeMap<String, EndpointConfig>,
}

#[derive(Debug, Default, Deserialize)]
pub struct Defaults {
    pub seed: Option<u64>,
    pub rate: Option<f64>,
    pub template: Option<String>,
    pub cache_dir: Option<String>,
    pub toxic_n: Option<usize>,
    pub nontoxic_n: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_id: String,
    pub auth_env: Option<String>,
    pub max_concurrent: Option<usize>,
    pub retries: Option<u32>,
    pub timeout_secs: Option<u64>,
}

impl EndpointConfig {
    pub fn to_endpoint(&self, name: &str) -> ModelEndpoint {
        let mut limits = forge_core::bench::client::RequestLimits::default();
        if let Some(c) = self.max_concurrent {
            limits.max_concurrent = c.max(1);
        }
        if let Some(r) = self.retries {
            limits.retries = r;
        }
        if let Some(t) = self.timeout_secs {
            limits.timeout_secs = t;
        }
        ModelEndpoint {
            name: name.to_string(),
            base_url: self.base_url.clone(),
            model_id: self.model_id.clone(),
            auth_env: self.auth_env.clone(),
            limits,
        }
    }
}

pub fn load(path: Option<&Path>) -> Result<ConfigFile> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(path) => {
            let content = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&content).with_context(|| format!("parsing config {}", path.display()))
        }
    }
}
