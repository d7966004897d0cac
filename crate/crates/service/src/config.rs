use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use crate::ServiceError;

/// Service settings, usually read from a TOML file.
///
/// ```toml
/// pack = "packs/sophie"
/// transcripts = "var/transcripts"
/// listen = "127.0.0.1:7878"
/// idle_timeout_secs = 1800
/// token = "change-me"
/// ```
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub pack: PathBuf,
    pub transcripts: PathBuf,
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default = "default_idle")]
    pub idle_timeout_secs: u64,
    #[serde(default = "default_tick")]
    pub tick_ms: u64,
    #[serde(default)]
    pub token: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

fn default_listen() -> String {
    "127.0.0.1:7878".into()
}

fn default_idle() -> u64 {
    1800
}

fn default_tick() -> u64 {
    500
}

impl ServiceConfig {
    pub fn new(pack: impl Into<PathBuf>, transcripts: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            pack: pack.into(),
            transcripts: transcripts.into(),
            listen: default_listen(),
            idle_timeout_secs: default_idle(),
            tick_ms: default_tick(),
            token: None,
            seed: 0,
        }
    }

    /// Relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ServiceError> {
        let mut config: ServiceConfig = toml::from_str(text).map_err(|e| ServiceError::ConfigInvalid(e.to_string()))?;
        for p in [&mut config.pack, &mut config.transcripts] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if config.tick_ms == 0 {
            return Err(ServiceError::ConfigInvalid("tick_ms must be positive".into()));
        }
        if config.listen.parse::<std::net::SocketAddr>().is_err() {
            return Err(ServiceError::ConfigInvalid(format!("listen: {:?} is not a socket address", config.listen)));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn idle_timeout(&self) -> Duration {
        Duration::from_secs(self.idle_timeout_secs)
    }
}
