//! TOML configuration shared by the CLI and the service.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::CmmdConfig;

/// Environment variable that overrides `server.port`.
pub const PORT_ENV: &str = "FACEFUSE_PORT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdapterSpec {
    pub name: String,
    /// `D_emb` for encoders, `D_w` for generators.
    pub dim: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    /// Where per-request run artifacts are persisted.
    pub runs_dir: PathBuf,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            runs_dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub encoder: AdapterSpec,
    pub generator: AdapterSpec,
    /// Directory written by `Pipeline::save`.
    pub model_dir: PathBuf,
    pub server: ServerConfig,
    pub cmmd: CmmdConfig,
}

impl Default for AdapterSpec {
    fn default() -> Self {
        Self {
            name: "toy".into(),
            dim: 64,
            seed: 0,
        }
    }
}

impl Default for Config {
    fn default() -> Self {
        Self {
            encoder: AdapterSpec {
                seed: 3,
                ..AdapterSpec::default()
            },
            generator: AdapterSpec {
                seed: 7,
                ..AdapterSpec::default()
            },
            model_dir: PathBuf::from("model"),
            server: ServerConfig::default(),
            cmmd: CmmdConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// `server.port`, unless `FACEFUSE_PORT` is set.
    pub fn port(&self) -> Result<u16> {
        match std::env::var(PORT_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{PORT_ENV}=`{v}` is not a port number"))),
            Err(_) => Ok(self.server.port),
        }
    }
}
