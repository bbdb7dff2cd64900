//! Guided and Rich view payloads. Both are pure functions of one
//! [`RiskAssessment`] plus device metadata.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use chrono::{DateTime, NaiveDate, Utc};
use iotrisk_core::{
    AssessedVulnerability, Color, DeviceCategory, DeviceId, DeviceRecord, ExceptionalRisk, ExceptionalRiskKind,
    FutureRiskLevel, PatchTrendLevel, RiskAssessment, RiskLevel, VulnTrendLevel,
};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ViewVersion {
    Guided,
    Rich,
}

impl std::str::FromStr for ViewVersion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "guided" => Ok(ViewVersion::Guided),
            "rich" => Ok(ViewVersion::Rich),
            other => Err(format!("unknown view version {other:?} (expected guided or rich)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DeviceSummary {
    pub device_id: DeviceId,
    pub device_type: String,
    pub category: DeviceCategory,
    pub owner: String,
    pub network_address: String,
    pub vendor: String,
    pub model: String,
    pub firmware_version: String,
    pub version_assumed: bool,
    pub as_of: NaiveDate,
    pub generated_at: DateTime<Utc>,
}

impl DeviceSummary {
    pub fn new(record: &DeviceRecord, assessment: &RiskAssessment) -> Self {
        Self {
            device_id: record.device_id.clone(),
            device_type: record.device_type.clone(),
            category: record.category,
            owner: record.owner.clone(),
            network_address: record.network_address.clone(),
            vendor: assessment.identity.vendor.clone(),
            model: assessment.identity.model.clone(),
            firmware_version: assessment.identity.firmware_version.clone(),
            version_assumed: record.identity.as_ref().is_some_and(|r| r.version_assumed),
            as_of: assessment.as_of,
            generated_at: assessment.generated_at,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum IconKind {
    UnpatchedVulnerabilities,
    PrivateKeyMaterial,
    ExceptionalRisk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct IndicatorIcon {
    pub kind: IconKind,
    pub color: Color,
    pub tooltip: String,
    /// Number of CVEs behind an unpatched-vulnerabilities icon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GuidedView {
    pub device: DeviceSummary,
    pub traffic_light: Color,
    pub current_risk: RiskLevel,
    pub future_risk: FutureRiskLevel,
    /// Risk paragraph, trend paragraph, exceptional-risk paragraph.
    pub narrative: Vec<String>,
    pub indicator_icons: Vec<IndicatorIcon>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RiskScorePanel {
    pub current_risk: RiskLevel,
    pub color: Color,
    pub current_risk_basis: Option<f64>,
    pub cve_table: Vec<AssessedVulnerability>,
    /// Shown instead of the table when it is empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empty_message: Option<String>,
    pub exceptional_risks: Vec<ExceptionalRisk>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TrendSeries {
    pub patches_per_year: BTreeMap<i32, u32>,
    pub vulns_per_year: BTreeMap<i32, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FuturePanel {
    pub future_risk: FutureRiskLevel,
    pub vuln_trend: VulnTrendLevel,
    pub patch_trend: PatchTrendLevel,
    pub patch_trend_mean_days: Option<f64>,
    pub trend_series: TrendSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RichView {
    pub device: DeviceSummary,
    pub risk_score_panel: RiskScorePanel,
    pub future_panel: FuturePanel,
    pub section_tooltips: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "version", rename_all = "snake_case")]
pub enum ViewPayload {
    Guided(GuidedView),
    Rich(RichView),
}

/// The fields both views must agree on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyInformation {
    pub current_risk: RiskLevel,
    pub future_risk: FutureRiskLevel,
    pub exceptional_risks: usize,
    pub cves: usize,
}

impl GuidedView {
    pub fn key_information(&self) -> KeyInformation {
        KeyInformation {
            current_risk: self.traffic_light.risk_level(),
            future_risk: self.future_risk,
            exceptional_risks: self
                .indicator_icons
                .iter()
                .filter(|i| i.kind != IconKind::UnpatchedVulnerabilities)
                .count(),
            cves: self
                .indicator_icons
                .iter()
                .filter(|i| i.kind == IconKind::UnpatchedVulnerabilities)
                .filter_map(|i| i.count)
                .sum(),
        }
    }
}

impl RichView {
    pub fn key_information(&self) -> KeyInformation {
        KeyInformation {
            current_risk: self.risk_score_panel.current_risk,
            future_risk: self.future_panel.future_risk,
            exceptional_risks: self.risk_score_panel.exceptional_risks.len(),
            cves: self.risk_score_panel.cve_table.len(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct Basis {
    cves: String,
    exceptional: String,
    clean: String,
}

#[derive(Debug, Deserialize)]
struct PatchPhrase {
    fast: String,
    medium: String,
    slow: String,
    never: String,
}

#[derive(Debug, Deserialize)]
struct ExceptionalCopy {
    none: String,
    some: String,
}

#[derive(Debug, Deserialize)]
struct IconCopy {
    unpatched_vulnerabilities: String,
    private_key_material: String,
    exceptional_risk: String,
}

#[derive(Debug, Deserialize)]
struct Copy {
    risk_sentence: String,
    basis: Basis,
    advice: BTreeMap<RiskLevel, String>,
    version_assumed: String,
    trend_sentence: String,
    patch_phrase: PatchPhrase,
    exceptional: ExceptionalCopy,
    icons: IconCopy,
    section_tooltips: BTreeMap<String, String>,
    empty_cve_table: String,
}

fn copy() -> &'static Copy {
    static COPY: OnceLock<Copy> = OnceLock::new();
    COPY.get_or_init(|| {
        serde_json::from_str(include_str!("../copy/narrative.json")).expect("bundled copy table is valid")
    })
}

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    vars.iter().fold(template.to_string(), |s, (k, v)| s.replace(&format!("{{{k}}}"), v))
}

fn max_severity(table: &[AssessedVulnerability]) -> Option<&AssessedVulnerability> {
    table.iter().max_by(|a, b| a.severity.cmp(&b.severity).then(a.cvss_score.total_cmp(&b.cvss_score)))
}

fn format_days(days: f64) -> String {
    let rounded = (days * 10.0).round() / 10.0;
    if rounded.fract() == 0.0 {
        format!("{rounded:.0}")
    } else {
        format!("{rounded:.1}")
    }
}

fn narrative(summary: &DeviceSummary, a: &RiskAssessment) -> Vec<String> {
    let c = copy();
    let identity = format!("{} {}, firmware {}", a.identity.vendor, a.identity.model, a.identity.firmware_version);
    let mut risk = vec![fill(&c.risk_sentence, &[("device_type", &summary.device_type), ("level", a.current_risk.as_str())])];
    risk.push(if !a.cve_table.is_empty() {
        fill(&c.basis.cves, &[("count", &a.cve_table.len().to_string()), ("identity", &identity)])
    } else if !a.exceptional_risks.is_empty() {
        fill(&c.basis.exceptional, &[("identity", &identity)])
    } else {
        fill(&c.basis.clean, &[("identity", &identity)])
    });
    if summary.version_assumed {
        risk.push(c.version_assumed.clone());
    }
    risk.push(c.advice[&a.current_risk].clone());

    let patch_phrase = match a.patch_trend_mean_days {
        None => c.patch_phrase.never.clone(),
        Some(mean) => {
            let template = match a.patch_trend {
                PatchTrendLevel::Fast => &c.patch_phrase.fast,
                PatchTrendLevel::Medium => &c.patch_phrase.medium,
                PatchTrendLevel::Slow => &c.patch_phrase.slow,
            };
            fill(template, &[("mean_days", &format_days(mean))])
        }
    };
    let trend = fill(
        &c.trend_sentence,
        &[
            ("vuln_trend", a.vuln_trend.as_str()),
            ("patch_phrase", &patch_phrase),
            ("future_risk", a.future_risk.as_str()),
        ],
    );

    let exceptional = if a.exceptional_risks.is_empty() {
        c.exceptional.none.clone()
    } else {
        let descriptions = a.exceptional_risks.iter().map(|r| r.description.as_str()).collect::<Vec<_>>().join(" ");
        fill(&c.exceptional.some, &[("count", &a.exceptional_risks.len().to_string()), ("descriptions", &descriptions)])
    };
    vec![risk.join(" "), trend, exceptional]
}

/// `affected_releases` is the number of firmware releases of the model that
/// carry at least one of the listed CVEs; it only feeds tooltip text.
pub fn guided_view(summary: DeviceSummary, a: &RiskAssessment, affected_releases: usize) -> GuidedView {
    let c = copy();
    let mut icons = Vec::new();
    if let Some(worst) = max_severity(&a.cve_table) {
        icons.push(IndicatorIcon {
            kind: IconKind::UnpatchedVulnerabilities,
            color: worst.severity.color(),
            tooltip: fill(
                &c.icons.unpatched_vulnerabilities,
                &[
                    ("count", &a.cve_table.len().to_string()),
                    ("releases", &affected_releases.max(1).to_string()),
                    ("max_cvss", &format!("{:.1}", worst.cvss_score)),
                ],
            ),
            count: Some(a.cve_table.len()),
        });
    }
    for risk in &a.exceptional_risks {
        let (kind, tooltip) = match risk.kind {
            ExceptionalRiskKind::PrivateKeyMaterial => (IconKind::PrivateKeyMaterial, c.icons.private_key_material.clone()),
            ExceptionalRiskKind::Other(_) => {
                (IconKind::ExceptionalRisk, fill(&c.icons.exceptional_risk, &[("description", &risk.description)]))
            }
        };
        icons.push(IndicatorIcon { kind, color: Color::Red, tooltip, count: None });
    }
    GuidedView {
        narrative: narrative(&summary, a),
        device: summary,
        traffic_light: a.color(),
        current_risk: a.current_risk,
        future_risk: a.future_risk,
        indicator_icons: icons,
    }
}

pub fn rich_view(summary: DeviceSummary, a: &RiskAssessment) -> RichView {
    let c = copy();
    let mut cve_table = a.cve_table.clone();
    cve_table.sort_by(AssessedVulnerability::table_order);
    RichView {
        device: summary,
        risk_score_panel: RiskScorePanel {
            current_risk: a.current_risk,
            color: a.color(),
            current_risk_basis: a.current_risk_basis,
            empty_message: cve_table.is_empty().then(|| c.empty_cve_table.clone()),
            cve_table,
            exceptional_risks: a.exceptional_risks.clone(),
        },
        future_panel: FuturePanel {
            future_risk: a.future_risk,
            vuln_trend: a.vuln_trend,
            patch_trend: a.patch_trend,
            patch_trend_mean_days: a.patch_trend_mean_days,
            trend_series: TrendSeries {
                patches_per_year: a.patches_per_year.clone(),
                vulns_per_year: a.vulns_per_year.clone(),
            },
        },
        section_tooltips: c.section_tooltips.clone(),
    }
}
