use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use iotrisk_core::identify::IdentifyConfig;
use iotrisk_core::pipeline::PipelineConfig;
use iotrisk_core::score::ScoringConfig;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const ENV_LISTEN: &str = "IOTRISK_LISTEN";
pub const ENV_STORE: &str = "IOTRISK_STORE";
pub const ENV_DATA_DIR: &str = "IOTRISK_DATA_DIR";
pub const ENV_AS_OF: &str = "IOTRISK_AS_OF";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub listen: String,
    /// Knowledge base directory (feed, manifests, signatures, fixtures).
    pub data_dir: PathBuf,
    /// Single-file device/assessment store.
    pub store_path: PathBuf,
    /// Assessment date used when a request does not name one. Defaults to
    /// the current UTC date.
    pub as_of: Option<NaiveDate>,
    pub identify: IdentifyConfig,
    pub scoring: ScoringConfig,
    pub webhook_timeout_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("data"),
            store_path: PathBuf::from("data/state/store.json"),
            as_of: None,
            identify: IdentifyConfig::default(),
            scoring: ScoringConfig::default(),
            webhook_timeout_secs: 5,
        }
    }
}

impl ServiceConfig {
    /// Reads a TOML (`.toml`) or JSON config file. Relative paths inside it
    /// resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut config: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        if config.data_dir.is_relative() {
            config.data_dir = base.join(&config.data_dir);
        }
        if config.store_path.is_relative() {
            config.store_path = base.join(&config.store_path);
        }
        config.validate()?;
        Ok(config)
    }

    /// Applies `IOTRISK_*` environment overrides.
    pub fn with_env(self) -> Result<Self, ServiceError> {
        self.with_overrides(|key| env::var(key).ok())
    }

    pub fn with_overrides(mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ServiceError> {
        if let Some(v) = lookup(ENV_LISTEN) {
            self.listen = v;
        }
        if let Some(v) = lookup(ENV_STORE) {
            self.store_path = v.into();
        }
        if let Some(v) = lookup(ENV_DATA_DIR) {
            self.data_dir = v.into();
        }
        if let Some(v) = lookup(ENV_AS_OF) {
            self.as_of = Some(v.parse().map_err(|e| ServiceError::Config(format!("{ENV_AS_OF}={v}: {e}")))?);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        self.scoring.validate().map_err(|e| ServiceError::Config(e.to_string()))?;
        if self.listen.trim().is_empty() {
            return Err(ServiceError::Config("listen address is empty".into()));
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig { identify: self.identify.clone(), scoring: self.scoring.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("iotrisk.toml");
        fs::write(&path, "listen = \"0.0.0.0:9000\"\ndata_dir = \"kb\"\n[scoring]\ntrend_window_years = 3\n").unwrap();
        let config = ServiceConfig::load(&path).unwrap();
        assert_eq!(config.listen, "0.0.0.0:9000");
        assert_eq!(config.data_dir, dir.path().join("kb"));
        assert_eq!(config.scoring.trend_window_years, 3);

        let config = config
            .with_overrides(|k| match k {
                ENV_LISTEN => Some("127.0.0.1:7000".into()),
                ENV_AS_OF => Some("2021-06-01".into()),
                _ => None,
            })
            .unwrap();
        assert_eq!(config.listen, "127.0.0.1:7000");
        assert_eq!(config.as_of, NaiveDate::from_ymd_opt(2021, 6, 1));
    }

    #[test]
    fn bad_values_are_rejected() {
        let bad_date = ServiceConfig::default().with_overrides(|k| (k == ENV_AS_OF).then(|| "June".into()));
        assert!(bad_date.is_err());
        let mut config = ServiceConfig::default();
        config.scoring.severity_buckets.low_max = 8.0;
        assert!(config.validate().is_err());
    }
}
