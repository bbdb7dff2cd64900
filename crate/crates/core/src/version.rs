//! Loose version ordering for third-party component versions.
//!
//! Vendor strings are irregular (`1.0.2k`, `2.6.32-rc1`, `v4_1`), so this is
//! not semver. Versions are split on `.`, `-`, `_` and `+`; all-digit segments
//! compare numerically, anything else lexicographically. Missing trailing
//! segments count as `0`, so `1.0` == `1.0.0`.

use std::cmp::Ordering;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment<'a> {
    Num(u64),
    Text(&'a str),
}

fn segments(version: &str) -> Vec<Segment<'_>> {
    let trimmed = version.trim();
    let trimmed = trimmed.strip_prefix(['v', 'V']).filter(|rest| {
        rest.starts_with(|c: char| c.is_ascii_digit())
    }).unwrap_or(trimmed);
    trimmed
        .split(['.', '-', '_', '+'])
        .filter(|s| !s.is_empty())
        .map(|s| match s.parse::<u64>() {
            Ok(n) if s.bytes().all(|b| b.is_ascii_digit()) => Segment::Num(n),
            _ => Segment::Text(s),
        })
        .collect()
}

fn cmp_segment(a: &Segment<'_>, b: &Segment<'_>) -> Ordering {
    match (a, b) {
        (Segment::Num(x), Segment::Num(y)) => x.cmp(y),
        (Segment::Num(x), Segment::Text(t)) => x.to_string().as_str().cmp(t),
        (Segment::Text(t), Segment::Num(y)) => (*t).cmp(y.to_string().as_str()),
        (Segment::Text(s), Segment::Text(t)) => s.cmp(t),
    }
}

pub fn compare_versions(a: &str, b: &str) -> Ordering {
    let sa = segments(a);
    let sb = segments(b);
    let zero = Segment::Num(0);
    for i in 0..sa.len().max(sb.len()) {
        let x = sa.get(i).unwrap_or(&zero);
        let y = sb.get(i).unwrap_or(&zero);
        match cmp_segment(x, y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

/// Inclusive version range. An absent bound is open.
#[derive(Debug, Clone, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize, schemars::JsonSchema)]
pub struct VersionRange {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<String>,
}

impl VersionRange {
    pub fn between(min: impl Into<String>, max: impl Into<String>) -> Self {
        Self { min: Some(min.into()), max: Some(max.into()) }
    }

    pub fn contains(&self, version: &str) -> bool {
        let above_min = self.min.as_deref().is_none_or(|m| compare_versions(version, m) != Ordering::Less);
        let below_max = self.max.as_deref().is_none_or(|m| compare_versions(version, m) != Ordering::Greater);
        above_min && below_max
    }
}
