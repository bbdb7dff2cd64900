//! Change subscriptions and notification delivery.

use std::collections::BTreeSet;
use std::time::Duration;

use chrono::{DateTime, Utc};
use iotrisk_core::{DeviceId, FutureRiskLevel, ModelKey, RiskAssessment, RiskLevel};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubscriptionTarget {
    Device { device_id: DeviceId },
    Model { vendor: String, model: String },
}

impl SubscriptionTarget {
    pub fn matches(&self, assessment: &RiskAssessment) -> bool {
        match self {
            SubscriptionTarget::Device { device_id } => *device_id == assessment.device_id,
            SubscriptionTarget::Model { vendor, model } => {
                ModelKey::new(vendor, model).matches(&assessment.identity)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sink {
    Webhook { url: String },
    /// Written to the service log only.
    Log,
}

impl Sink {
    pub fn validate(&self) -> Result<(), ServiceError> {
        match self {
            Sink::Log => Ok(()),
            Sink::Webhook { url } => {
                let parsed = reqwest::Url::parse(url)
                    .map_err(|e| ServiceError::Validation(format!("webhook url {url:?}: {e}")))?;
                if !matches!(parsed.scheme(), "http" | "https") {
                    return Err(ServiceError::Validation(format!("webhook url {url:?} must be http or https")));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SubscriptionRequest {
    pub target: SubscriptionTarget,
    pub sink: Sink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Subscription {
    pub subscription_id: String,
    pub target: SubscriptionTarget,
    pub sink: Sink,
    pub created_at: DateTime<Utc>,
}

/// What changed between two consecutive assessments of a device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AssessmentDelta {
    pub old_current_risk: RiskLevel,
    pub new_current_risk: RiskLevel,
    pub old_future_risk: FutureRiskLevel,
    pub new_future_risk: FutureRiskLevel,
    pub added_cves: Vec<String>,
    pub removed_cves: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Notification {
    pub notification_id: String,
    pub subscription_id: String,
    pub device_id: DeviceId,
    pub delta: AssessmentDelta,
    pub created_at: DateTime<Utc>,
}

/// The delta between consecutive assessments, or `None` when current risk,
/// future risk and the set of CVEs are all unchanged.
pub fn notify_on_change(old: &RiskAssessment, new: &RiskAssessment) -> Option<AssessmentDelta> {
    let ids = |a: &RiskAssessment| a.cve_table.iter().map(|v| v.cve_id.clone()).collect::<BTreeSet<_>>();
    let (before, after) = (ids(old), ids(new));
    let delta = AssessmentDelta {
        old_current_risk: old.current_risk,
        new_current_risk: new.current_risk,
        old_future_risk: old.future_risk,
        new_future_risk: new.future_risk,
        added_cves: after.difference(&before).cloned().collect(),
        removed_cves: before.difference(&after).cloned().collect(),
    };
    let changed = delta.old_current_risk != delta.new_current_risk
        || delta.old_future_risk != delta.new_future_risk
        || !delta.added_cves.is_empty()
        || !delta.removed_cves.is_empty();
    changed.then_some(delta)
}

/// Delivers a notification to its sink. Failures are logged, not returned:
/// the assessment that triggered it has already been stored.
pub async fn deliver(client: &reqwest::Client, sink: &Sink, notification: &Notification, timeout: Duration) {
    match sink {
        Sink::Log => info!(
            subscription = %notification.subscription_id,
            device = %notification.device_id,
            current = %notification.delta.new_current_risk,
            future = %notification.delta.new_future_risk,
            added = notification.delta.added_cves.len(),
            "assessment changed"
        ),
        Sink::Webhook { url } => {
            let result = client.post(url).json(notification).timeout(timeout).send().await;
            match result.and_then(|r| r.error_for_status()) {
                Ok(_) => info!(%url, notification = %notification.notification_id, "webhook delivered"),
                Err(e) => warn!(%url, error = %e, "webhook delivery failed"),
            }
        }
    }
}
