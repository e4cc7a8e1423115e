use std::fs;
use std::path::Path;

use daq_core::acquisition::AcquisitionConfig;
use daq_core::sim::SimConfig;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

/// Where the acquisition device lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DeviceEndpoint {
    /// A device (or `daq simulate --listen`) reachable over TCP.
    Tcp { address: String },
    /// An in-process simulator, started fresh for every session.
    Simulated { sim: SimConfig },
}

impl DeviceEndpoint {
    pub fn describe(&self) -> String {
        match self {
            DeviceEndpoint::Tcp { address } => format!("tcp://{address}"),
            DeviceEndpoint::Simulated { .. } => "simulated".to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    pub device: DeviceEndpoint,
    #[serde(default = "default_connect_timeout")]
    pub connect_timeout_ms: u64,
    /// Initial acquisition configuration; replaceable through the API.
    #[serde(default)]
    pub acquisition: AcquisitionConfig,
}

fn default_listen() -> String {
    "127.0.0.1:8080".to_owned()
}

fn default_connect_timeout() -> u64 {
    2_000
}

impl ServiceConfig {
    pub fn new(device: DeviceEndpoint) -> Self {
        ServiceConfig {
            listen: default_listen(),
            device,
            connect_timeout_ms: default_connect_timeout(),
            acquisition: AcquisitionConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ServiceError> {
        let mut cfg: ServiceConfig =
            serde_json::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        if let DeviceEndpoint::Simulated { sim } = &mut cfg.device {
            *sim = sim
                .clone()
                .resolve()
                .and_then(|s| s.validate().map(|_| s))
                .map_err(|e| ServiceError::Config(e.to_string()))?;
        }
        cfg.acquisition
            .validate()
            .map_err(|e| ServiceError::Config(format!("acquisition: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
