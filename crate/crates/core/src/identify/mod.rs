//! Device identification from web-page fingerprints and TCP clock skew,
//! combined with subjective-logic cumulative fusion.

mod decision;
pub mod opinion;
pub mod skew;
pub mod web;

use std::path::Path;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decision::{decide_identity, Decision};
pub use opinion::{fuse_opinions, Hypothesis, Opinion};
pub use skew::{estimate_clock_skew, skew_to_opinion, SkewProfile, TimestampSample, TimestampTrace};
pub use web::{
    match_web_patterns, FingerprintSignature, Matcher, PatternLocation, SignatureDb, WebCorpus, WebPage,
    WebPattern,
};

use crate::model::{ModelIdentity, ModelKey};

#[derive(Debug, Error)]
pub enum IdentifyError {
    #[error("web corpus has no pages")]
    EmptyCorpus,
    #[error("signature database is empty")]
    NoSignatures,
    #[error("skew profile list is empty")]
    NoProfiles,
    #[error("signature {signature_id}: {reason}")]
    InvalidSignature { signature_id: String, reason: String },
    #[error("invalid skew profile: {0}")]
    InvalidProfile(String),
    #[error("trace has {got} samples, need at least 10")]
    InsufficientSamples { got: usize },
    #[error("trace capture times span zero seconds")]
    DegenerateTrace,
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("invalid opinion: {0}")]
    InvalidOpinion(String),
    #[error("opinion domains disagree: {0}")]
    DomainMismatch(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

impl IdentifyError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    pub(crate) fn parse(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::Parse { path: path.display().to_string(), message: err.to_string() }
    }
}

/// Tunables for the identification stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct IdentifyConfig {
    /// Maximum total belief a web match may produce.
    pub web_belief_cap: f64,
    /// Total belief assigned to skew evidence.
    pub skew_belief_total: f64,
    /// Profiles further than this many tolerances away are not candidates.
    pub skew_max_z: f64,
    pub decision_threshold: f64,
    pub decision_margin: f64,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self {
            web_belief_cap: 0.95,
            skew_belief_total: 0.8,
            skew_max_z: 3.0,
            decision_threshold: 0.6,
            decision_margin: 0.05,
        }
    }
}

/// Everything the identification stage produced for one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct IdentificationReport {
    pub web_opinion: Option<Opinion>,
    pub skew_ppm: Option<f64>,
    pub skew_opinion: Option<Opinion>,
    /// Fused opinion over (vendor, model) with wildcard firmware.
    pub fused_opinion: Opinion,
    pub decision: Decision,
    /// Firmware version observed in web evidence for the decided model, if any.
    pub observed_firmware: Option<String>,
}

/// Runs both identification mechanisms that have evidence available and fuses
/// them at model granularity.
///
/// Clock skew is a hardware trait and says nothing about firmware, so both
/// opinions are coarsened to (vendor, model) before fusion. The firmware
/// version is then taken from the strongest firmware-specific web hypothesis
/// of the decided model, when there is one.
pub fn identify(
    corpus: Option<&WebCorpus>,
    trace: Option<&TimestampTrace>,
    signatures: Option<&SignatureDb>,
    profiles: &[SkewProfile],
    config: &IdentifyConfig,
) -> Result<IdentificationReport, IdentifyError> {
    let web_opinion = match (corpus, signatures) {
        (Some(c), Some(db)) if !c.pages.is_empty() => Some(match_web_patterns(c, db, config)?),
        _ => None,
    };
    let (skew_ppm, skew_opinion) = match trace {
        Some(t) if !profiles.is_empty() => {
            let skew = estimate_clock_skew(t)?;
            (Some(skew), Some(skew_to_opinion(skew, profiles, config)?))
        }
        Some(t) => (Some(estimate_clock_skew(t)?), None),
        None => (None, None),
    };

    let coarse_web = web_opinion.as_ref().map(Opinion::coarsen_to_models).unwrap_or_else(Opinion::vacuous);
    let coarse_skew = skew_opinion.as_ref().map(Opinion::coarsen_to_models).unwrap_or_else(Opinion::vacuous);
    let fused_opinion = fuse_opinions(&coarse_web, &coarse_skew)?;
    let decision = decide_identity(&fused_opinion, config.decision_threshold, config.decision_margin);

    let observed_firmware = match (&decision, &web_opinion) {
        (Decision::Identified { identity, .. }, Some(web)) => observed_version(web, &identity.key()),
        _ => None,
    };

    Ok(IdentificationReport { web_opinion, skew_ppm, skew_opinion, fused_opinion, decision, observed_firmware })
}

fn observed_version(web: &Opinion, key: &ModelKey) -> Option<String> {
    web.hypotheses()
        .iter()
        .filter(|h| key.matches(&h.identity) && !h.identity.is_wildcard() && h.belief > 0.0)
        .max_by(|a, b| a.belief.total_cmp(&b.belief).then_with(|| b.identity.cmp(&a.identity)))
        .map(|h| h.identity.firmware_version.clone())
}

/// Resolves a decided model to a concrete firmware. Uses the observed version
/// when it is a known release, otherwise the most recent known release, in
/// which case the second value is `true` (version assumed).
pub fn resolve_firmware(
    key: &ModelKey,
    observed: Option<&str>,
    known_releases: &[String],
) -> Option<(ModelIdentity, bool)> {
    let make = |v: &str| ModelIdentity {
        vendor: key.vendor.clone(),
        model: key.model.clone(),
        firmware_version: v.to_string(),
    };
    if let Some(v) = observed.filter(|v| known_releases.iter().any(|k| k == v)) {
        return Some((make(v), false));
    }
    known_releases.last().map(|latest| (make(latest), true))
}
