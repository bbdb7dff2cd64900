//! Plain-text output. Colors are always spelled out as words; ANSI codes are
//! added only when stdout is a terminal.

use std::fmt::Write;

use chrono::NaiveDate;
use iotrisk_core::identify::{Decision, IdentificationReport, Opinion};
use iotrisk_core::{Color, DeviceRecord, RiskAssessment};
use iotrisk_service::service::CategoryComparison;
use iotrisk_service::views::{GuidedView, IconKind, RichView};

#[derive(Debug, Clone, Copy)]
pub struct Style {
    pub ansi: bool,
}

impl Style {
    /// The color word padded to `width`, wrapped in ANSI codes if enabled.
    fn color(self, color: Color, width: usize) -> String {
        let word = format!("{:<width$}", color.as_upper());
        if !self.ansi {
            return word;
        }
        let code = match color {
            Color::Green => "32",
            Color::Yellow => "33",
            Color::Red => "31",
        };
        format!("\x1b[1;{code}m{word}\x1b[0m")
    }
}

fn mean_days(mean: Option<f64>) -> String {
    mean.map_or_else(|| "never patched".into(), |m| format!("{m:.1} days"))
}

pub fn assessment_table(a: &RiskAssessment, style: Style) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Device        {}", a.device_id);
    let _ = writeln!(s, "Identity      {}", a.identity);
    let _ = writeln!(s, "As of         {}", a.as_of);
    let _ = writeln!(s, "Current risk  {} {}", style.color(a.color(), 6), a.current_risk);
    let _ = writeln!(s, "Future risk   {}", a.future_risk);
    let _ = writeln!(s, "Vuln trend    {}", a.vuln_trend);
    let _ = writeln!(s, "Patch trend   {} (mean {})", a.patch_trend, mean_days(a.patch_trend_mean_days));
    let _ = writeln!(s, "Exceptional   {}", a.exceptional_risks.len());
    for r in &a.exceptional_risks {
        let _ = writeln!(s, "  - {}", r.description);
    }
    let _ = writeln!(s);
    if a.cve_table.is_empty() {
        let _ = writeln!(s, "No known vulnerabilities.");
    } else {
        let _ = writeln!(s, "{:<16} {:>5}  {:<8} {:<10}  {:<10} {:>7}", "CVE", "CVSS", "SEVERITY", "PUBLISHED", "PATCHED IN", "LATENCY");
        for v in &a.cve_table {
            let _ = writeln!(
                s,
                "{:<16} {:>5.1}  {:<8} {:<10}  {:<10} {:>7}",
                v.cve_id,
                v.cvss_score,
                v.severity,
                v.published,
                v.patched_in.as_deref().unwrap_or("-"),
                v.patch_latency_days.map_or_else(|| "-".to_string(), |d| d.to_string()),
            );
        }
    }
    s
}

pub fn guided(v: &GuidedView, style: Style) -> String {
    let mut s = String::new();
    let d = &v.device;
    let _ = writeln!(s, "{} {} ({} {}, firmware {})", style.color(v.traffic_light, 6), d.device_type, d.vendor, d.model, d.firmware_version);
    for paragraph in &v.narrative {
        let _ = writeln!(s, "\n{paragraph}");
    }
    if !v.indicator_icons.is_empty() {
        let _ = writeln!(s, "\nIndicators:");
        for icon in &v.indicator_icons {
            let label = match icon.kind {
                IconKind::UnpatchedVulnerabilities => "unpatched vulnerabilities",
                IconKind::PrivateKeyMaterial => "private key material",
                IconKind::ExceptionalRisk => "exceptional risk",
            };
            let _ = writeln!(s, "  {} {label}: {}", style.color(icon.color, 6), icon.tooltip);
        }
    }
    s
}

pub fn rich(v: &RichView, style: Style) -> String {
    let mut s = String::new();
    let d = &v.device;
    let p = &v.risk_score_panel;
    let f = &v.future_panel;
    let _ = writeln!(s, "{} ({} {}, firmware {}) as of {}", d.device_type, d.vendor, d.model, d.firmware_version, d.as_of);
    let _ = writeln!(s, "\n== Device Risk Score: {} {}", style.color(p.color, 6), p.current_risk);
    if let Some(msg) = &p.empty_message {
        let _ = writeln!(s, "{msg}");
    }
    for c in &p.cve_table {
        let _ = writeln!(s, "  {:<16} {:>5.1} {:<7} published {}", c.cve_id, c.cvss_score, c.severity, c.published);
    }
    for r in &p.exceptional_risks {
        let _ = writeln!(s, "  ! {}", r.description);
    }
    let _ = writeln!(s, "\n== Future Risk Estimation: {}", f.future_risk);
    let _ = writeln!(s, "  Firmware vulnerability trend  {}", f.vuln_trend);
    let _ = writeln!(s, "  Model patch trend             {} (mean {})", f.patch_trend, mean_days(f.patch_trend_mean_days));
    let _ = writeln!(s, "  Patches per year              {}", series(&f.trend_series.patches_per_year));
    let _ = writeln!(s, "  Vulnerabilities per year      {}", series(&f.trend_series.vulns_per_year));
    s
}

fn series(map: &std::collections::BTreeMap<i32, u32>) -> String {
    map.iter().map(|(y, n)| format!("{y}:{n}")).collect::<Vec<_>>().join(" ")
}

pub fn comparison(c: &CategoryComparison, style: Style) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Category {} as of {} (best first)", c.category, c.as_of);
    for card in &c.cards {
        let assumed = if card.version_assumed { " (latest release)" } else { "" };
        let _ = writeln!(
            s,
            "  {} {:<24} firmware {:<8}{} future risk {}, {} CVEs",
            style.color(card.color, 6),
            card.display_name,
            card.firmware_version,
            assumed,
            card.future_risk,
            card.assessment.cve_table.len()
        );
    }
    s
}

fn opinion_lines(s: &mut String, label: &str, o: &Opinion) {
    let _ = writeln!(s, "{label} (uncertainty {:.4})", o.uncertainty());
    for h in o.hypotheses() {
        let _ = writeln!(s, "  {:<48} belief {:.4}  P {:.4}", h.identity.to_string(), h.belief, o.projected(&h.identity));
    }
}

pub fn identification(r: &IdentificationReport, _style: Style) -> String {
    let mut s = String::new();
    match &r.web_opinion {
        Some(o) => opinion_lines(&mut s, "Web opinion", o),
        None => {
            let _ = writeln!(s, "Web opinion: no corpus");
        }
    }
    if let Some(skew) = r.skew_ppm {
        let _ = writeln!(s, "Clock skew: {skew:.3} ppm");
    }
    if let Some(o) = &r.skew_opinion {
        opinion_lines(&mut s, "Skew opinion", o);
    }
    opinion_lines(&mut s, "Fused opinion", &r.fused_opinion);
    match &r.decision {
        Decision::Identified { identity, confidence } => {
            let firmware = r.observed_firmware.as_deref().unwrap_or("not observed");
            let _ = writeln!(
                s,
                "Decision: identified {} {} (P {confidence:.4}, firmware {firmware})",
                identity.vendor, identity.model
            );
        }
        Decision::Unidentified => {
            let _ = writeln!(s, "Decision: unidentified");
        }
    }
    s
}

pub fn demo_table(as_of: NaiveDate, rows: &[(DeviceRecord, RiskAssessment)], style: Style) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Demo assessment as of {as_of}");
    let _ = writeln!(
        s,
        "{:<14} {:<14} {:<24} {:<9} {:<6} {:<8} {:<8} {:>4}",
        "DEVICE", "TYPE", "MODEL", "FIRMWARE", "LIGHT", "RISK", "FUTURE", "CVES"
    );
    for (d, a) in rows {
        let _ = writeln!(
            s,
            "{:<14} {:<14} {:<24} {:<9} {} {:<8} {:<8} {:>4}",
            d.device_id,
            d.device_type,
            format!("{} {}", a.identity.vendor, a.identity.model),
            a.identity.firmware_version,
            style.color(a.color(), 6),
            a.current_risk,
            a.future_risk,
            a.cve_table.len()
        );
    }
    s
}
