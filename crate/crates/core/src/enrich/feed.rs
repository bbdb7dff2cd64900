//! Vulnerability feed ingestion.
//!
//! One canonical feed format covers every upstream source; each entry may
//! carry a `source` tag. Merging several sources is plain concatenation
//! followed by the usual dedup-by-id.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use tracing::warn;

use super::EnrichError;
use crate::model::{is_valid_cve_id, ModelKey};
use crate::version::VersionRange;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AffectsKey {
    /// A third-party component within an inclusive version range.
    Component {
        name: String,
        #[serde(default)]
        versions: VersionRange,
    },
    /// A vendor/model pair. `firmware_versions` restricts the match to the
    /// listed releases; absent means every release.
    Model {
        vendor: String,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        firmware_versions: Option<Vec<String>>,
    },
}

impl AffectsKey {
    pub fn model_key(&self) -> Option<ModelKey> {
        match self {
            AffectsKey::Model { vendor, model, .. } => Some(ModelKey::new(vendor, model)),
            AffectsKey::Component { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct VulnerabilityFeedEntry {
    #[serde(rename = "id", alias = "cve_id")]
    pub cve_id: String,
    pub published: NaiveDate,
    #[serde(rename = "score", alias = "cvss_score")]
    pub cvss_score: f64,
    pub affects: Vec<AffectsKey>,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exploitation_probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl VulnerabilityFeedEntry {
    /// Returns the offending field name and a message.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if !is_valid_cve_id(&self.cve_id) {
            return Err(("id", format!("{:?} is not a CVE identifier", self.cve_id)));
        }
        if !(0.0..=10.0).contains(&self.cvss_score) {
            return Err(("score", format!("{} outside [0, 10]", self.cvss_score)));
        }
        if self.affects.is_empty() {
            return Err(("affects", "no match keys".into()));
        }
        for key in &self.affects {
            match key {
                AffectsKey::Component { name, .. } if name.trim().is_empty() => {
                    return Err(("affects", "component name is empty".into()))
                }
                AffectsKey::Model { vendor, model, .. } if vendor.trim().is_empty() || model.trim().is_empty() => {
                    return Err(("affects", "vendor/model is empty".into()))
                }
                _ => {}
            }
        }
        if let Some(p) = self.exploitation_probability {
            if !(0.0..=1.0).contains(&p) {
                return Err(("exploitation_probability", format!("{p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// A dropped duplicate. Not fatal; reported so operators can fix sources.
#[derive(Debug, Clone, PartialEq)]
pub struct DuplicateConflict {
    pub cve_id: String,
    pub kept_score: f64,
    pub dropped_score: f64,
}

/// Parses and validates a feed document (a JSON array of entries).
pub fn parse_feed(text: &str, origin: &str) -> Result<Vec<VulnerabilityFeedEntry>, EnrichError> {
    let raw: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| EnrichError::MalformedFeed {
        origin: origin.to_string(),
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let mut entries = Vec::with_capacity(raw.len());
    for (index, value) in raw.into_iter().enumerate() {
        let label = value
            .get("id")
            .or_else(|| value.get("cve_id"))
            .and_then(|v| v.as_str())
            .map(|id| format!("entry {index} ({id})"))
            .unwrap_or_else(|| format!("entry {index}"));
        let entry: VulnerabilityFeedEntry = serde_json::from_value(value).map_err(|e| EnrichError::MalformedFeed {
            origin: origin.to_string(),
            location: label.clone(),
            message: e.to_string(),
        })?;
        entry.validate().map_err(|(field, message)| EnrichError::MalformedFeed {
            origin: origin.to_string(),
            location: format!("{label}, field {field}"),
            message,
        })?;
        entries.push(entry);
    }
    Ok(normalize_feed(entries).0)
}

pub fn ingest_feed(path: &Path) -> Result<Vec<VulnerabilityFeedEntry>, EnrichError> {
    let text = fs::read_to_string(path).map_err(|e| EnrichError::io(path, e))?;
    parse_feed(&text, &path.display().to_string())
}

/// Deduplicates by CVE id keeping the highest score, then sorts by published
/// date (ties by id).
pub fn normalize_feed(
    entries: Vec<VulnerabilityFeedEntry>,
) -> (Vec<VulnerabilityFeedEntry>, Vec<DuplicateConflict>) {
    let mut by_id: BTreeMap<String, VulnerabilityFeedEntry> = BTreeMap::new();
    let mut conflicts = Vec::new();
    for entry in entries {
        match by_id.get_mut(&entry.cve_id) {
            None => {
                by_id.insert(entry.cve_id.clone(), entry);
            }
            Some(existing) => {
                let (kept, dropped) = if entry.cvss_score > existing.cvss_score {
                    let dropped = existing.cvss_score;
                    *existing = entry;
                    (existing.cvss_score, dropped)
                } else {
                    (existing.cvss_score, entry.cvss_score)
                };
                warn!(cve = %existing.cve_id, kept, dropped, "duplicate feed entry");
                conflicts.push(DuplicateConflict { cve_id: existing.cve_id.clone(), kept_score: kept, dropped_score: dropped });
            }
        }
    }
    let mut out: Vec<_> = by_id.into_values().collect();
    out.sort_by(|a, b| a.published.cmp(&b.published).then_with(|| a.cve_id.cmp(&b.cve_id)));
    (out, conflicts)
}
