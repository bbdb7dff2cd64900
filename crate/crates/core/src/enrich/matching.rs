use crate::model::AssessedVulnerability;
use crate::score::{severity_bucket, SeverityBuckets};

use super::{AffectsKey, EnrichError, FirmwareManifest, VulnerabilityFeedEntry};

/// A CVE applies to a firmware image if any of its keys matches: a component
/// with the same name (ASCII case-insensitive) and a version inside the
/// inclusive range, or the image's vendor/model.
pub fn entry_applies(entry: &VulnerabilityFeedEntry, manifest: &FirmwareManifest) -> bool {
    entry.affects.iter().any(|key| match key {
        AffectsKey::Component { name, versions } => manifest
            .components
            .iter()
            .any(|c| c.name.eq_ignore_ascii_case(name) && versions.contains(&c.version)),
        AffectsKey::Model { vendor, model, firmware_versions } => {
            manifest.model_keys().any(|k| &k.vendor == vendor && &k.model == model)
                && firmware_versions
                    .as_ref()
                    .is_none_or(|versions| versions.contains(&manifest.identity.firmware_version))
        }
    })
}

/// CVEs affecting one firmware image, in CVE-table order. Patch fields are
/// left empty; they depend on the model's release history.
pub fn match_vulnerabilities(
    manifest: &FirmwareManifest,
    feed: &[VulnerabilityFeedEntry],
    buckets: &SeverityBuckets,
) -> Result<Vec<AssessedVulnerability>, EnrichError> {
    let mut out = Vec::new();
    for entry in feed.iter().filter(|e| entry_applies(e, manifest)) {
        out.push(AssessedVulnerability {
            cve_id: entry.cve_id.clone(),
            cvss_score: entry.cvss_score,
            severity: severity_bucket(entry.cvss_score, buckets)?,
            published: entry.published,
            patched_in: None,
            patch_latency_days: None,
            exploitation_probability: entry.exploitation_probability,
        });
    }
    out.sort_by(AssessedVulnerability::table_order);
    Ok(out)
}
