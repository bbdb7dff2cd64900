//! Patch events: when a vulnerability entered a model's firmware history and
//! which later release removed it.

use chrono::NaiveDate;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::matching::entry_applies;
use super::{EnrichError, FirmwareManifest, VulnerabilityFeedEntry};
use crate::model::{ModelKey, RiskLevel};
use crate::score::{severity_bucket, SeverityBuckets};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PatchEvent {
    pub cve_id: String,
    pub model: ModelKey,
    /// Earliest affected release.
    pub vulnerable_since: String,
    pub patched_in: Option<String>,
    pub published: NaiveDate,
    pub patched_date: Option<NaiveDate>,
    pub latency_days: Option<u32>,
    pub cvss_score: f64,
    pub severity: RiskLevel,
}

impl PatchEvent {
    pub fn is_patched_as_of(&self, as_of: NaiveDate) -> bool {
        self.patched_date.is_some_and(|d| d <= as_of)
    }
}

/// Sorts a model's manifests by release date and checks the history is
/// usable: non-empty, one model, strictly increasing dates.
pub fn order_history(mut history: Vec<FirmwareManifest>) -> Result<Vec<FirmwareManifest>, EnrichError> {
    let Some(first) = history.first() else {
        return Err(EnrichError::EmptyHistory);
    };
    let key = first.key();
    if let Some(other) = history.iter().find(|m| m.key() != key) {
        return Err(EnrichError::InvalidHistory(format!("mixes {key} and {}", other.key())));
    }
    history.sort_by_key(|m| m.release_date);
    if let Some(w) = history.windows(2).find(|w| w[0].release_date == w[1].release_date) {
        return Err(EnrichError::InvalidHistory(format!(
            "{} and {} share release date {}",
            w[0].identity.firmware_version, w[1].identity.firmware_version, w[0].release_date
        )));
    }
    Ok(history)
}

/// One event per CVE affecting any release of the model.
///
/// The fix is the first release after the *last* affected one, so a
/// vulnerability that reappears in a later image counts as open again.
/// Latency runs from public registration to the fixing release and is clamped
/// at zero for vendors that shipped the fix before disclosure.
pub fn compute_patch_events(
    history: &[FirmwareManifest],
    feed: &[VulnerabilityFeedEntry],
    buckets: &SeverityBuckets,
) -> Result<Vec<PatchEvent>, EnrichError> {
    let history = order_history(history.to_vec())?;
    let key = history[0].key();
    let mut entries: Vec<&VulnerabilityFeedEntry> = feed.iter().collect();
    entries.sort_by(|a, b| a.cve_id.cmp(&b.cve_id));

    let mut events = Vec::new();
    for entry in entries {
        let affected: Vec<usize> = history
            .iter()
            .enumerate()
            .filter(|(_, m)| entry_applies(entry, m))
            .map(|(i, _)| i)
            .collect();
        let (Some(&first), Some(&last)) = (affected.first(), affected.last()) else {
            continue;
        };
        let fix = history.get(last + 1);
        let latency_days = fix.map(|m| (m.release_date - entry.published).num_days().max(0) as u32);
        events.push(PatchEvent {
            cve_id: entry.cve_id.clone(),
            model: key.clone(),
            vulnerable_since: history[first].identity.firmware_version.clone(),
            patched_in: fix.map(|m| m.identity.firmware_version.clone()),
            published: entry.published,
            patched_date: fix.map(|m| m.release_date),
            latency_days,
            cvss_score: entry.cvss_score,
            severity: severity_bucket(entry.cvss_score, buckets)?,
        });
    }
    events.sort_by(|a, b| a.published.cmp(&b.published).then_with(|| a.cve_id.cmp(&b.cve_id)));
    Ok(events)
}
