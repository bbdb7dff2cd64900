use std::fs;
use std::path::Path;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::ScoreError;

/// CVSS cut points. A score `<= low_max` is low, `<= medium_max` medium,
/// anything above high.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct SeverityBuckets {
    pub low_max: f64,
    pub medium_max: f64,
}

impl Default for SeverityBuckets {
    fn default() -> Self {
        Self { low_max: 3.9, medium_max: 6.9 }
    }
}

/// Mean patch latency cut points in days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct PatchTrendThresholds {
    pub fast_max: f64,
    pub medium_max: f64,
}

impl Default for PatchTrendThresholds {
    fn default() -> Self {
        Self { fast_max: 30.0, medium_max: 180.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct ScoringConfig {
    pub severity_buckets: SeverityBuckets,
    pub patch_trend_days: PatchTrendThresholds,
    pub trend_window_years: u32,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            severity_buckets: SeverityBuckets::default(),
            patch_trend_days: PatchTrendThresholds::default(),
            trend_window_years: 5,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<(), ScoreError> {
        let b = &self.severity_buckets;
        if !(0.0 <= b.low_max && b.low_max < b.medium_max && b.medium_max < 10.0) {
            return Err(ScoreError::InvalidConfig(format!(
                "severity thresholds must satisfy 0 <= low_max < medium_max < 10 (got {}, {})",
                b.low_max, b.medium_max
            )));
        }
        let p = &self.patch_trend_days;
        if !(0.0 <= p.fast_max && p.fast_max < p.medium_max) {
            return Err(ScoreError::InvalidConfig(format!(
                "patch thresholds must satisfy 0 <= fast_max < medium_max (got {}, {})",
                p.fast_max, p.medium_max
            )));
        }
        if self.trend_window_years == 0 {
            return Err(ScoreError::InvalidConfig("trend_window_years must be positive".into()));
        }
        Ok(())
    }

    /// Reads JSON, or TOML when the file extension is `.toml`.
    pub fn load(path: &Path) -> Result<Self, ScoreError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ScoreError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let config: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| ScoreError::InvalidConfig(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| ScoreError::InvalidConfig(format!("{}: {e}", path.display())))?
        };
        config.validate()?;
        Ok(config)
    }
}
