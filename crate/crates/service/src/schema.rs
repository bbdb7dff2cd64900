//! JSON Schemas for every response body, published at `GET /schemas`.

use std::collections::BTreeMap;

use iotrisk_core::RiskAssessment;
use schemars::{schema_for, JsonSchema, Schema};
use serde::{Deserialize, Serialize};

use crate::notify::{Notification, Subscription};
use crate::service::{CategoryComparison, DeviceDetail, DeviceListRow, IngestReport, Registration};
use crate::views::ViewPayload;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Health {
    pub status: String,
    pub devices: usize,
    pub feed_entries: usize,
    pub models: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ErrorBody {
    /// Stable machine-readable code, e.g. `unknown_device`.
    pub error: String,
    pub message: String,
}

/// Schema name for each response body type.
pub fn schemas() -> BTreeMap<&'static str, Schema> {
    BTreeMap::from([
        ("health", schema_for!(Health)),
        ("error", schema_for!(ErrorBody)),
        ("registration", schema_for!(Registration)),
        ("device_list", schema_for!(Vec<DeviceListRow>)),
        ("device_detail", schema_for!(DeviceDetail)),
        ("risk_assessment", schema_for!(RiskAssessment)),
        ("view", schema_for!(ViewPayload)),
        ("category_comparison", schema_for!(CategoryComparison)),
        ("subscription", schema_for!(Subscription)),
        ("subscription_list", schema_for!(Vec<Subscription>)),
        ("notification_list", schema_for!(Vec<Notification>)),
        ("ingest_report", schema_for!(IngestReport)),
    ])
}
