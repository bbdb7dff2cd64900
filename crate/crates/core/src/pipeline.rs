//! identify -> enrich -> score for one device or one catalog model.

use chrono::{DateTime, NaiveDate, Utc};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::info;

use crate::enrich::{enrich_firmware, EnrichError};
use crate::identify::{identify, resolve_firmware, Decision, IdentificationReport, IdentifyConfig, IdentifyError};
use crate::kb::{KbError, KnowledgeBase};
use crate::model::{DeviceId, ModelKey, ResolvedIdentity, RiskAssessment};
use crate::score::{assemble_assessment, ScoreError, ScoringConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no web corpus or timestamp trace for device {0}")]
    NoEvidence(DeviceId),
    #[error("no firmware manifest known for {0}")]
    UnknownModel(ModelKey),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Identify(#[from] IdentifyError),
    #[error(transparent)]
    Enrich(#[from] EnrichError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct PipelineConfig {
    pub identify: IdentifyConfig,
    pub scoring: ScoringConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AssessmentOutcome {
    Assessed { resolved: ResolvedIdentity, report: IdentificationReport, assessment: RiskAssessment },
    Unidentified { report: IdentificationReport },
}

/// Runs identification on whatever evidence fixtures exist for the device.
pub fn identify_device(
    kb: &KnowledgeBase,
    device: &DeviceId,
    config: &IdentifyConfig,
) -> Result<IdentificationReport, PipelineError> {
    let corpus = kb.corpus(device)?.filter(|c| !c.pages.is_empty());
    let trace = kb.trace(device)?;
    if corpus.is_none() && trace.is_none() {
        return Err(PipelineError::NoEvidence(device.clone()));
    }
    Ok(identify(corpus.as_ref(), trace.as_ref(), kb.signature_db(), kb.profiles(), config)?)
}

/// Enriches and scores a model on a chosen firmware version (or the latest
/// release when `observed` is absent or unknown).
pub fn assess_model(
    kb: &KnowledgeBase,
    device: &DeviceId,
    key: &ModelKey,
    observed: Option<&str>,
    confidence: f64,
    config: &ScoringConfig,
    as_of: NaiveDate,
    generated_at: DateTime<Utc>,
) -> Result<(ResolvedIdentity, RiskAssessment), PipelineError> {
    let known = kb.known_releases(key, as_of);
    let (identity, version_assumed) =
        resolve_firmware(key, observed, &known).ok_or_else(|| PipelineError::UnknownModel(key.clone()))?;
    let enrichment = enrich_firmware(&identity, kb.history(key), kb.feed(), &config.severity_buckets, as_of)?;
    let assessment = assemble_assessment(device, &identity, &enrichment, config, as_of, generated_at)?;
    Ok((ResolvedIdentity { identity, confidence, version_assumed }, assessment))
}

pub fn assess_device(
    kb: &KnowledgeBase,
    device: &DeviceId,
    config: &PipelineConfig,
    as_of: NaiveDate,
    generated_at: DateTime<Utc>,
) -> Result<AssessmentOutcome, PipelineError> {
    let report = identify_device(kb, device, &config.identify)?;
    let Decision::Identified { identity, confidence } = &report.decision else {
        info!(device = %device, "device not identified");
        return Ok(AssessmentOutcome::Unidentified { report });
    };
    let (resolved, assessment) = assess_model(
        kb,
        device,
        &identity.key(),
        report.observed_firmware.as_deref(),
        *confidence,
        &config.scoring,
        as_of,
        generated_at,
    )?;
    info!(
        device = %device,
        identity = %resolved.identity,
        risk = %assessment.current_risk,
        future = %assessment.future_risk,
        "device assessed"
    );
    Ok(AssessmentOutcome::Assessed { resolved, report, assessment })
}
