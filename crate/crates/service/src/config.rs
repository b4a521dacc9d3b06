use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use riskscope_core::api::{parse_grid, Role};
use riskscope_core::EpsilonGrid;
use serde::Deserialize;

use crate::ServiceError;

/// Service configuration, read from TOML.
///
/// ```toml
/// listen = "127.0.0.1:8080"
/// data_dir = "/var/lib/riskscope"
/// default_grid = "default37"
/// workers = 4
///
/// [tokens]
/// "analyst-token" = "analyst"
/// "controller-token" = "controller"
/// ```
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    pub tokens: HashMap<String, Role>,
    #[serde(default)]
    pub default_grid: Option<String>,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

impl ServiceConfig {
    pub fn new(tokens: HashMap<String, Role>) -> Self {
        Self {
            listen: default_listen(),
            data_dir: None,
            tokens,
            default_grid: None,
            workers: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.grid()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn grid(&self) -> Result<EpsilonGrid, ServiceError> {
        match &self.default_grid {
            Some(text) => parse_grid(text).map_err(|e| ServiceError::Config(e.to_string())),
            None => Ok(EpsilonGrid::default37()),
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }
}
