//! Shared domain types.
//!
//! Everything here is a plain immutable value: no I/O, no interior mutability.
//! JSON uses snake_case field names, `YYYY-MM-DD` dates and RFC 3339
//! timestamps.

use std::collections::BTreeMap;
use std::fmt;
use std::net::IpAddr;
use std::sync::LazyLock;

use chrono::{DateTime, NaiveDate, Utc};
use regex::Regex;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Firmware version placeholder used by signatures and skew profiles that
/// identify a model but not a particular firmware.
pub const WILDCARD_VERSION: &str = "*";

static CVE_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^CVE-\d{4}-\d{4,}$").unwrap());
static HOSTNAME: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?i)[a-z0-9](?:[a-z0-9-]{0,61}[a-z0-9])?(?:\.[a-z0-9](?:[a-z0-9-]{0,61}[a-z0-9])?)*$")
        .unwrap()
});

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{field} must not be empty")]
    Empty { field: &'static str },
    #[error("invalid CVE identifier {0:?}")]
    InvalidCveId(String),
    #[error("CVSS score {0} outside [0, 10]")]
    CvssOutOfRange(f64),
    #[error("{field} = {value} outside [0, 1]")]
    ProbabilityOutOfRange { field: &'static str, value: f64 },
    #[error("patched_in and patch_latency_days must be given together")]
    PatchFieldsMismatch,
    #[error("invalid network address {0:?}")]
    InvalidAddress(String),
}

pub fn is_valid_cve_id(id: &str) -> bool {
    CVE_ID.is_match(id)
}

/// Accepts IPv4/IPv6 literals and RFC 1123 host names.
pub fn is_valid_network_address(addr: &str) -> bool {
    !addr.is_empty() && (addr.parse::<IpAddr>().is_ok() || (addr.len() <= 253 && HOSTNAME.is_match(addr)))
}

/// Current risk of a device, shown to owners as a traffic light.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum RiskLevel {
    Low,
    Medium,
    High,
}

impl RiskLevel {
    pub const ALL: [RiskLevel; 3] = [RiskLevel::Low, RiskLevel::Medium, RiskLevel::High];

    pub fn color(self) -> Color {
        match self {
            RiskLevel::Low => Color::Green,
            RiskLevel::Medium => Color::Yellow,
            RiskLevel::High => Color::Red,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RiskLevel::Low => "low",
            RiskLevel::Medium => "medium",
            RiskLevel::High => "high",
        }
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

/// Display color. Never stored on its own; always derived from a [`RiskLevel`].
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Green,
    Yellow,
    Red,
}

impl Color {
    pub fn risk_level(self) -> RiskLevel {
        match self {
            Color::Green => RiskLevel::Low,
            Color::Yellow => RiskLevel::Medium,
            Color::Red => RiskLevel::High,
        }
    }

    pub fn as_upper(self) -> &'static str {
        match self {
            Color::Green => "GREEN",
            Color::Yellow => "YELLOW",
            Color::Red => "RED",
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_upper())
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum FutureRiskLevel {
    Low,
    Medium,
    High,
    Critical,
}

impl FutureRiskLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            FutureRiskLevel::Low => "low",
            FutureRiskLevel::Medium => "medium",
            FutureRiskLevel::High => "high",
            FutureRiskLevel::Critical => "critical",
        }
    }
}

impl fmt::Display for FutureRiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

/// Modal severity of a model's unpatched vulnerabilities.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum VulnTrendLevel {
    Low,
    Medium,
    High,
}

impl VulnTrendLevel {
    pub const ALL: [VulnTrendLevel; 3] =
        [VulnTrendLevel::Low, VulnTrendLevel::Medium, VulnTrendLevel::High];

    pub fn as_str(self) -> &'static str {
        match self {
            VulnTrendLevel::Low => "low",
            VulnTrendLevel::Medium => "medium",
            VulnTrendLevel::High => "high",
        }
    }
}

impl From<RiskLevel> for VulnTrendLevel {
    fn from(level: RiskLevel) -> Self {
        match level {
            RiskLevel::Low => VulnTrendLevel::Low,
            RiskLevel::Medium => VulnTrendLevel::Medium,
            RiskLevel::High => VulnTrendLevel::High,
        }
    }
}

impl fmt::Display for VulnTrendLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

/// How quickly a vendor ships fixes. `Fast` is the best value.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum PatchTrendLevel {
    Fast,
    Medium,
    Slow,
}

impl PatchTrendLevel {
    pub const ALL: [PatchTrendLevel; 3] =
        [PatchTrendLevel::Fast, PatchTrendLevel::Medium, PatchTrendLevel::Slow];

    pub fn as_str(self) -> &'static str {
        match self {
            PatchTrendLevel::Fast => "fast",
            PatchTrendLevel::Medium => "medium",
            PatchTrendLevel::Slow => "slow",
        }
    }
}

impl fmt::Display for PatchTrendLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

/// (vendor, model) without a firmware version.
#[derive(
    Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema,
)]
pub struct ModelKey {
    pub vendor: String,
    pub model: String,
}

impl ModelKey {
    pub fn new(vendor: impl Into<String>, model: impl Into<String>) -> Self {
        Self { vendor: vendor.into(), model: model.into() }
    }

    pub fn matches(&self, identity: &ModelIdentity) -> bool {
        self.vendor == identity.vendor && self.model == identity.model
    }
}

impl fmt::Display for ModelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.vendor, self.model)
    }
}

/// The (vendor, model, firmware) triple a device resolves to. This is the join
/// key between fingerprints, manifests and vulnerability data.
#[derive(
    Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema,
)]
pub struct ModelIdentity {
    pub vendor: String,
    pub model: String,
    pub firmware_version: String,
}

impl ModelIdentity {
    pub fn new(
        vendor: impl Into<String>,
        model: impl Into<String>,
        firmware_version: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let identity = Self {
            vendor: vendor.into(),
            model: model.into(),
            firmware_version: firmware_version.into(),
        };
        identity.validate()?;
        Ok(identity)
    }

    /// Identity of a model with unknown firmware.
    pub fn any_firmware(key: &ModelKey) -> Self {
        Self {
            vendor: key.vendor.clone(),
            model: key.model.clone(),
            firmware_version: WILDCARD_VERSION.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.vendor.trim().is_empty() {
            return Err(ModelError::Empty { field: "vendor" });
        }
        if self.model.trim().is_empty() {
            return Err(ModelError::Empty { field: "model" });
        }
        if self.firmware_version.trim().is_empty() {
            return Err(ModelError::Empty { field: "firmware_version" });
        }
        Ok(())
    }

    pub fn key(&self) -> ModelKey {
        ModelKey::new(&self.vendor, &self.model)
    }

    pub fn is_wildcard(&self) -> bool {
        self.firmware_version == WILDCARD_VERSION
    }
}

impl fmt::Display for ModelIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} (firmware {})", self.vendor, self.model, self.firmware_version)
    }
}

#[derive(
    Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema,
)]
#[serde(transparent)]
pub struct DeviceId(pub String);

impl DeviceId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(&self.0)
    }
}

impl From<&str> for DeviceId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum DeviceCategory {
    Business,
    Private,
}

impl fmt::Display for DeviceCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            DeviceCategory::Business => "business",
            DeviceCategory::Private => "private",
        })
    }
}

/// An identification outcome attached to a device: the identity together
/// with the projected probability that backed the decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ResolvedIdentity {
    #[serde(flatten)]
    pub identity: ModelIdentity,
    pub confidence: f64,
    /// True when the firmware version was not observed and the latest known
    /// release was assumed.
    #[serde(default)]
    pub version_assumed: bool,
}

/// A registered device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DeviceRecord {
    pub device_id: DeviceId,
    pub network_address: String,
    pub category: DeviceCategory,
    pub device_type: String,
    pub owner: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<ResolvedIdentity>,
    pub registered_at: DateTime<Utc>,
}

impl DeviceRecord {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.device_id.0.trim().is_empty() {
            return Err(ModelError::Empty { field: "device_id" });
        }
        if self.owner.trim().is_empty() {
            return Err(ModelError::Empty { field: "owner" });
        }
        if self.device_type.trim().is_empty() {
            return Err(ModelError::Empty { field: "device_type" });
        }
        if !is_valid_network_address(&self.network_address) {
            return Err(ModelError::InvalidAddress(self.network_address.clone()));
        }
        if let Some(resolved) = &self.identity {
            resolved.identity.validate()?;
            if !(0.0..=1.0).contains(&resolved.confidence) {
                return Err(ModelError::ProbabilityOutOfRange {
                    field: "confidence",
                    value: resolved.confidence,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ExceptionalRiskKind {
    PrivateKeyMaterial,
    Other(String),
}

/// A firmware finding that is not a CVE, e.g. an embedded private key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
pub struct ExceptionalRisk {
    pub kind: ExceptionalRiskKind,
    pub description: String,
    pub evidence: String,
}

impl ExceptionalRisk {
    pub fn new(
        kind: ExceptionalRiskKind,
        description: impl Into<String>,
        evidence: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let risk = Self { kind, description: description.into(), evidence: evidence.into() };
        if risk.kind == ExceptionalRiskKind::PrivateKeyMaterial && risk.evidence.is_empty() {
            return Err(ModelError::Empty { field: "evidence" });
        }
        Ok(risk)
    }
}

/// One row of a device's CVE table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AssessedVulnerability {
    pub cve_id: String,
    pub cvss_score: f64,
    pub severity: RiskLevel,
    pub published: NaiveDate,
    pub patched_in: Option<String>,
    pub patch_latency_days: Option<u32>,
    /// Passed through from the feed when present; never computed.
    pub exploitation_probability: Option<f64>,
}

impl AssessedVulnerability {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !is_valid_cve_id(&self.cve_id) {
            return Err(ModelError::InvalidCveId(self.cve_id.clone()));
        }
        if !(0.0..=10.0).contains(&self.cvss_score) {
            return Err(ModelError::CvssOutOfRange(self.cvss_score));
        }
        if self.patched_in.is_some() != self.patch_latency_days.is_some() {
            return Err(ModelError::PatchFieldsMismatch);
        }
        if let Some(p) = self.exploitation_probability {
            if !(0.0..=1.0).contains(&p) {
                return Err(ModelError::ProbabilityOutOfRange {
                    field: "exploitation_probability",
                    value: p,
                });
            }
        }
        Ok(())
    }

    /// CVE table order: severity descending, then newest first, then id.
    pub fn table_order(a: &Self, b: &Self) -> std::cmp::Ordering {
        b.severity
            .cmp(&a.severity)
            .then_with(|| b.published.cmp(&a.published))
            .then_with(|| a.cve_id.cmp(&b.cve_id))
    }
}

/// The complete scored output for one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RiskAssessment {
    pub device_id: DeviceId,
    pub identity: ModelIdentity,
    pub as_of: NaiveDate,
    pub current_risk: RiskLevel,
    /// Highest CVSS score among unpatched CVEs of the identified firmware.
    pub current_risk_basis: Option<f64>,
    pub cve_table: Vec<AssessedVulnerability>,
    pub exceptional_risks: Vec<ExceptionalRisk>,
    pub vuln_trend: VulnTrendLevel,
    pub patch_trend: PatchTrendLevel,
    /// Mean patch latency in days; `None` when the vendor never patched.
    pub patch_trend_mean_days: Option<f64>,
    pub future_risk: FutureRiskLevel,
    #[serde(deserialize_with = "year_counts::deserialize")]
    pub patches_per_year: BTreeMap<i32, u32>,
    #[serde(deserialize_with = "year_counts::deserialize")]
    pub vulns_per_year: BTreeMap<i32, u32>,
    pub generated_at: DateTime<Utc>,
}

impl RiskAssessment {
    pub fn color(&self) -> Color {
        self.current_risk.color()
    }

    /// Equality ignoring `generated_at`.
    pub fn same_content(&self, other: &Self) -> bool {
        let mut a = self.clone();
        a.generated_at = other.generated_at;
        a == *other
    }
}

/// Year-keyed counts. JSON object keys are strings; serde's buffered
/// deserialization (used inside internally tagged enums) does not convert
/// them back to integers on its own.
mod year_counts {
    use std::collections::BTreeMap;
    use std::fmt;

    use serde::de::{self, Deserializer, MapAccess, Visitor};

    struct Year(i32);

    impl<'de> de::Deserialize<'de> for Year {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            struct V;
            impl Visitor<'_> for V {
                type Value = Year;
                fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                    f.pad("a year")
                }
                fn visit_i64<E: de::Error>(self, v: i64) -> Result<Year, E> {
                    i32::try_from(v).map(Year).map_err(E::custom)
                }
                fn visit_u64<E: de::Error>(self, v: u64) -> Result<Year, E> {
                    i32::try_from(v).map(Year).map_err(E::custom)
                }
                fn visit_str<E: de::Error>(self, v: &str) -> Result<Year, E> {
                    v.parse().map(Year).map_err(E::custom)
                }
            }
            d.deserialize_any(V)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<i32, u32>, D::Error> {
        struct M;
        impl<'de> Visitor<'de> for M {
            type Value = BTreeMap<i32, u32>;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.pad("a map from year to count")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut out = BTreeMap::new();
                while let Some((Year(y), n)) = map.next_entry::<Year, u32>()? {
                    out.insert(y, n);
                }
                Ok(out)
            }
        }
        d.deserialize_map(M)
    }
}
