//! Clock-skew fingerprinting from TCP timestamp options.
//!
//! The TSval clock of an embedded device drifts at a rate set by its crystal.
//! Plotting `tsval_seconds - capture_time` against capture time gives a line
//! whose slope is that drift; the slope in parts per million is stable enough
//! per hardware model to act as a fingerprint.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{IdentifyConfig, IdentifyError, Opinion};
use crate::model::{DeviceId, ModelIdentity};

pub const MIN_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TimestampSample {
    /// Capture time in seconds on the observer's clock.
    pub capture_time_s: f64,
    pub tsval: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TimestampTrace {
    pub device_id: DeviceId,
    pub tsval_frequency_hz: f64,
    pub samples: Vec<TimestampSample>,
}

#[derive(Debug, Deserialize)]
struct TraceSidecar {
    #[serde(default)]
    device_id: Option<DeviceId>,
    tsval_frequency_hz: f64,
}

impl TimestampTrace {
    pub fn validate(&self) -> Result<(), IdentifyError> {
        if self.samples.len() < MIN_SAMPLES {
            return Err(IdentifyError::InsufficientSamples { got: self.samples.len() });
        }
        if !(self.tsval_frequency_hz > 0.0 && self.tsval_frequency_hz.is_finite()) {
            return Err(IdentifyError::InvalidTrace(format!(
                "tsval frequency {} Hz is not positive",
                self.tsval_frequency_hz
            )));
        }
        if let Some(w) = self.samples.windows(2).find(|w| w[1].capture_time_s <= w[0].capture_time_s) {
            return Err(IdentifyError::InvalidTrace(format!(
                "capture time not strictly increasing at {}",
                w[1].capture_time_s
            )));
        }
        Ok(())
    }

    /// Loads a trace from inline JSON (`.json`) or from CSV with header
    /// `capture_time_s,tsval` plus a `<file>.meta.json` sidecar carrying
    /// `tsval_frequency_hz` (and optionally `device_id`).
    pub fn load(path: &Path) -> Result<Self, IdentifyError> {
        if path.extension().is_some_and(|e| e == "json") {
            let text = fs::read_to_string(path).map_err(|e| IdentifyError::io(path, e))?;
            return serde_json::from_str(&text).map_err(|e| IdentifyError::parse(path, e));
        }
        let sidecar_path = sidecar_path(path);
        let text = fs::read_to_string(&sidecar_path).map_err(|e| IdentifyError::io(&sidecar_path, e))?;
        let sidecar: TraceSidecar =
            serde_json::from_str(&text).map_err(|e| IdentifyError::parse(&sidecar_path, e))?;
        let mut reader = csv::Reader::from_path(path).map_err(|e| IdentifyError::parse(path, e))?;
        let samples = reader
            .deserialize()
            .collect::<Result<Vec<TimestampSample>, _>>()
            .map_err(|e| IdentifyError::parse(path, e))?;
        let device_id = sidecar.device_id.unwrap_or_else(|| {
            DeviceId::new(path.file_stem().and_then(|s| s.to_str()).unwrap_or_default())
        });
        Ok(Self { device_id, tsval_frequency_hz: sidecar.tsval_frequency_hz, samples })
    }
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SkewProfile {
    /// Usually carries the wildcard firmware version: skew is a hardware trait.
    pub identity: ModelIdentity,
    pub expected_skew_ppm: f64,
    pub tolerance_ppm: f64,
}

impl SkewProfile {
    pub fn validate(&self) -> Result<(), IdentifyError> {
        self.identity
            .validate()
            .map_err(|e| IdentifyError::InvalidProfile(e.to_string()))?;
        if !(self.tolerance_ppm > 0.0 && self.tolerance_ppm.is_finite()) {
            return Err(IdentifyError::InvalidProfile(format!(
                "{}: tolerance {} ppm is not positive",
                self.identity, self.tolerance_ppm
            )));
        }
        Ok(())
    }
}

/// Least-squares clock skew of a trace in ppm.
///
/// TSval is unwrapped by accumulating wrapping deltas, which assumes at most
/// one 32-bit wrap between consecutive samples. Offsets are taken relative to
/// the first sample so large absolute counter values do not cost precision.
pub fn estimate_clock_skew(trace: &TimestampTrace) -> Result<f64, IdentifyError> {
    if trace.samples.len() < MIN_SAMPLES {
        return Err(IdentifyError::InsufficientSamples { got: trace.samples.len() });
    }
    let first = trace.samples[0];
    let last = trace.samples[trace.samples.len() - 1];
    if last.capture_time_s - first.capture_time_s == 0.0 {
        return Err(IdentifyError::DegenerateTrace);
    }
    trace.validate()?;

    let mut ticks: u64 = 0;
    let mut prev = first.tsval;
    let points: Vec<(f64, f64)> = trace
        .samples
        .iter()
        .map(|s| {
            ticks += u64::from(s.tsval.wrapping_sub(prev));
            prev = s.tsval;
            let elapsed = s.capture_time_s - first.capture_time_s;
            let remote = ticks as f64 / trace.tsval_frequency_hz;
            (elapsed, remote - elapsed)
        })
        .collect();

    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(sxy, sxx), (x, y)| {
        let dx = x - mean_x;
        (sxy + dx * (y - mean_y), sxx + dx * dx)
    });
    if sxx == 0.0 {
        return Err(IdentifyError::DegenerateTrace);
    }
    Ok(sxy / sxx * 1e6)
}

/// Skew evidence as an opinion. Profiles within `skew_max_z` tolerances get
/// Gaussian weight `exp(-z^2 / 2)`; the weights share `skew_belief_total`.
pub fn skew_to_opinion(
    skew_ppm: f64,
    profiles: &[SkewProfile],
    config: &IdentifyConfig,
) -> Result<Opinion, IdentifyError> {
    if profiles.is_empty() {
        return Err(IdentifyError::NoProfiles);
    }
    let mut weights: BTreeMap<ModelIdentity, f64> = BTreeMap::new();
    for p in profiles {
        let z = (skew_ppm - p.expected_skew_ppm).abs() / p.tolerance_ppm;
        if z <= config.skew_max_z {
            let w = (-z * z / 2.0).exp();
            let entry = weights.entry(p.identity.clone()).or_insert(0.0);
            *entry = entry.max(w);
        }
    }
    Ok(Opinion::from_weights(weights, config.skew_belief_total))
}
