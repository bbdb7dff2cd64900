//! Vulnerability enrichment: feeds, firmware manifests, CVE matching, patch
//! events and exceptional (non-CVE) findings.

mod feed;
mod manifest;
mod matching;
mod patch;

use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

pub use feed::{ingest_feed, normalize_feed, parse_feed, AffectsKey, DuplicateConflict, VulnerabilityFeedEntry};
pub use manifest::{
    detect_exceptional_risks, extract_components, scan_secret_markers, Component, FirmwareManifest,
    FirmwareSource, KEY_MARKERS, KEY_MATERIAL_DESCRIPTION,
};
pub use matching::{entry_applies, match_vulnerabilities};
pub use patch::{compute_patch_events, order_history, PatchEvent};

use crate::model::{AssessedVulnerability, ExceptionalRisk, ModelIdentity};
use crate::score::{ScoreError, SeverityBuckets};

#[derive(Debug, Error)]
pub enum EnrichError {
    #[error("malformed feed {origin} at {location}: {message}")]
    MalformedFeed { origin: String, location: String, message: String },
    #[error("malformed manifest {origin}: {message}")]
    MalformedManifest { origin: String, message: String },
    #[error("firmware history is empty")]
    EmptyHistory,
    #[error("invalid firmware history: {0}")]
    InvalidHistory(String),
    #[error("no manifest for {0} released on or before the assessment date")]
    UnknownFirmware(ModelIdentity),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl EnrichError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }
}

/// Everything the scoring stage needs about one identified firmware.
#[derive(Debug, Clone, PartialEq)]
pub struct Enrichment {
    pub firmware: FirmwareManifest,
    /// The model's releases up to the assessment date, oldest first.
    pub history: Vec<FirmwareManifest>,
    pub events: Vec<PatchEvent>,
    /// CVEs affecting the identified firmware, with the fixing release (if
    /// one exists yet) filled in.
    pub cve_table: Vec<AssessedVulnerability>,
    pub exceptional_risks: Vec<ExceptionalRisk>,
}

/// Enriches one identified firmware as of `as_of`: releases after that date
/// and CVEs published after it are ignored.
pub fn enrich_firmware(
    identity: &ModelIdentity,
    history: &[FirmwareManifest],
    feed: &[VulnerabilityFeedEntry],
    buckets: &SeverityBuckets,
    as_of: NaiveDate,
) -> Result<Enrichment, EnrichError> {
    let visible: Vec<FirmwareManifest> = history.iter().filter(|m| m.release_date <= as_of).cloned().collect();
    let history = order_history(visible).map_err(|e| match e {
        EnrichError::EmptyHistory => EnrichError::UnknownFirmware(identity.clone()),
        other => other,
    })?;
    let firmware = history
        .iter()
        .find(|m| m.identity == *identity)
        .cloned()
        .ok_or_else(|| EnrichError::UnknownFirmware(identity.clone()))?;
    let feed: Vec<VulnerabilityFeedEntry> = feed.iter().filter(|e| e.published <= as_of).cloned().collect();

    let events = compute_patch_events(&history, &feed, buckets)?;
    let mut cve_table = match_vulnerabilities(&firmware, &feed, buckets)?;
    for row in &mut cve_table {
        if let Some(event) = events.iter().find(|e| e.cve_id == row.cve_id && e.patched_in.is_some()) {
            row.patched_in = event.patched_in.clone();
            row.patch_latency_days = event.latency_days;
        }
    }
    let exceptional_risks = detect_exceptional_risks(&firmware);
    Ok(Enrichment { firmware, history, events, cve_table, exceptional_risks })
}
