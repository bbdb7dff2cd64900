//! Web-pattern fingerprinting.
//!
//! A signature is a weighted set of patterns (vendor strings, copyright
//! lines, API paths, firmware banners) checked against the pages a device
//! serves. The matched-weight fraction of each signature becomes evidence for
//! its identity.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use regex::Regex;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{IdentifyConfig, IdentifyError, Opinion};
use crate::model::{DeviceId, ModelIdentity};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum PatternLocation {
    Body,
    Url,
    /// Header name, compared case-insensitively.
    Header(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Literal(String),
    Regex(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct WebPattern {
    pub location: PatternLocation,
    pub matcher: Matcher,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FingerprintSignature {
    pub signature_id: String,
    /// May carry the wildcard firmware version.
    pub identity: ModelIdentity,
    pub patterns: Vec<WebPattern>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct WebPage {
    pub url: String,
    #[serde(default = "default_status")]
    pub status: u16,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    #[serde(default)]
    pub body: String,
}

fn default_status() -> u16 {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct WebCorpus {
    pub device_id: DeviceId,
    pub pages: Vec<WebPage>,
}

impl WebCorpus {
    pub fn load(path: &Path) -> Result<Self, IdentifyError> {
        let text = fs::read_to_string(path).map_err(|e| IdentifyError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| IdentifyError::parse(path, e))
    }
}

enum CompiledMatcher {
    Literal(String),
    Regex(Regex),
}

struct CompiledPattern {
    location: PatternLocation,
    matcher: CompiledMatcher,
    weight: f64,
}

impl CompiledPattern {
    fn test(&self, text: &str) -> bool {
        match &self.matcher {
            CompiledMatcher::Literal(s) => text.contains(s.as_str()),
            CompiledMatcher::Regex(r) => r.is_match(text),
        }
    }

    fn matches(&self, page: &WebPage) -> bool {
        match &self.location {
            PatternLocation::Body => self.test(&page.body),
            PatternLocation::Url => self.test(&page.url),
            PatternLocation::Header(name) => page
                .headers
                .iter()
                .filter(|(k, _)| k.eq_ignore_ascii_case(name))
                .any(|(_, v)| self.test(v)),
        }
    }
}

struct CompiledSignature {
    identity: ModelIdentity,
    patterns: Vec<CompiledPattern>,
    total_weight: f64,
}

/// A validated, regex-compiled signature set. Read-only once built.
pub struct SignatureDb {
    signatures: Vec<CompiledSignature>,
}

impl SignatureDb {
    pub fn new(signatures: &[FingerprintSignature]) -> Result<Self, IdentifyError> {
        if signatures.is_empty() {
            return Err(IdentifyError::NoSignatures);
        }
        let mut compiled = Vec::with_capacity(signatures.len());
        for sig in signatures {
            let invalid = |reason: String| IdentifyError::InvalidSignature {
                signature_id: sig.signature_id.clone(),
                reason,
            };
            sig.identity.validate().map_err(|e| invalid(e.to_string()))?;
            if sig.patterns.is_empty() {
                return Err(invalid("no patterns".into()));
            }
            let mut patterns = Vec::with_capacity(sig.patterns.len());
            for p in &sig.patterns {
                if !(p.weight > 0.0 && p.weight.is_finite()) {
                    return Err(invalid(format!("weight {} is not positive", p.weight)));
                }
                let matcher = match &p.matcher {
                    Matcher::Literal(s) if s.is_empty() => return Err(invalid("empty literal".into())),
                    Matcher::Literal(s) => CompiledMatcher::Literal(s.clone()),
                    Matcher::Regex(r) => {
                        CompiledMatcher::Regex(Regex::new(r).map_err(|e| invalid(e.to_string()))?)
                    }
                };
                patterns.push(CompiledPattern { location: p.location.clone(), matcher, weight: p.weight });
            }
            let total_weight = patterns.iter().map(|p| p.weight).sum();
            compiled.push(CompiledSignature { identity: sig.identity.clone(), patterns, total_weight });
        }
        Ok(Self { signatures: compiled })
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    /// Matched-weight fraction per identity. Several signatures for the same
    /// identity keep the best fraction.
    pub fn match_fractions(&self, corpus: &WebCorpus) -> BTreeMap<ModelIdentity, f64> {
        let mut fractions: BTreeMap<ModelIdentity, f64> = BTreeMap::new();
        for sig in &self.signatures {
            let matched: f64 = sig
                .patterns
                .iter()
                .filter(|p| corpus.pages.iter().any(|page| p.matches(page)))
                .map(|p| p.weight)
                .sum();
            let f = matched / sig.total_weight;
            if f > 0.0 {
                let entry = fractions.entry(sig.identity.clone()).or_insert(0.0);
                *entry = entry.max(f);
            }
        }
        fractions
    }
}

/// Web evidence as an opinion: belief proportional to each candidate's
/// matched-weight fraction, with total belief equal to the best fraction
/// (capped at `config.web_belief_cap`).
pub fn match_web_patterns(
    corpus: &WebCorpus,
    signatures: &SignatureDb,
    config: &IdentifyConfig,
) -> Result<Opinion, IdentifyError> {
    if corpus.pages.is_empty() {
        return Err(IdentifyError::EmptyCorpus);
    }
    let fractions = signatures.match_fractions(corpus);
    let best = fractions.values().copied().fold(0.0, f64::max);
    Ok(Opinion::from_weights(fractions, best.min(config.web_belief_cap)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(model: &str) -> ModelIdentity {
        ModelIdentity::new("Acme", model, "*").unwrap()
    }

    fn literal(location: PatternLocation, s: &str, weight: f64) -> WebPattern {
        WebPattern { location, matcher: Matcher::Literal(s.into()), weight }
    }

    fn db() -> SignatureDb {
        SignatureDb::new(&[
            FingerprintSignature {
                signature_id: "kettle".into(),
                identity: identity("Kettle9000"),
                patterns: vec![
                    literal(PatternLocation::Body, "Kettle9000", 1.0),
                    literal(PatternLocation::Body, "(c) Acme Appliances", 1.0),
                ],
            },
            FingerprintSignature {
                signature_id: "toaster".into(),
                identity: identity("Toaster2"),
                patterns: vec![
                    WebPattern {
                        location: PatternLocation::Header("Server".into()),
                        matcher: Matcher::Regex(r"^AcmeToast/\d+".into()),
                        weight: 2.0,
                    },
                    literal(PatternLocation::Url, "/api/toast", 2.0),
                ],
            },
        ])
        .unwrap()
    }

    fn corpus(body: &str, headers: &[(&str, &str)], url: &str) -> WebCorpus {
        WebCorpus {
            device_id: DeviceId::new("d1"),
            pages: vec![WebPage {
                url: url.into(),
                status: 200,
                headers: headers.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
                body: body.into(),
            }],
        }
    }

    #[test]
    fn full_match_hits_the_belief_cap() {
        let c = corpus("<h1>Kettle9000</h1><footer>(c) Acme Appliances</footer>", &[], "/");
        let o = match_web_patterns(&c, &db(), &IdentifyConfig::default()).unwrap();
        assert!((o.belief(&identity("Kettle9000")) - 0.95).abs() < 1e-12);
        assert!((o.uncertainty() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn half_match() {
        let c = corpus("Kettle9000 status page", &[], "/");
        let o = match_web_patterns(&c, &db(), &IdentifyConfig::default()).unwrap();
        assert!((o.belief(&identity("Kettle9000")) - 0.5).abs() < 1e-12);
        assert!((o.uncertainty() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn no_match_is_vacuous() {
        let c = corpus("hello", &[], "/");
        let o = match_web_patterns(&c, &db(), &IdentifyConfig::default()).unwrap();
        assert!(o.is_vacuous());
        assert!(o.hypotheses().is_empty());
    }

    #[test]
    fn headers_are_case_insensitive_and_regex_anchored() {
        let c = corpus("", &[("server", "AcmeToast/3 (embedded)")], "/index.html");
        let o = match_web_patterns(&c, &db(), &IdentifyConfig::default()).unwrap();
        assert!((o.belief(&identity("Toaster2")) - 0.5).abs() < 1e-12);
        let c = corpus("", &[("Server", "nginx AcmeToast/3")], "/");
        assert!(match_web_patterns(&c, &db(), &IdentifyConfig::default()).unwrap().is_vacuous());
    }

    #[test]
    fn two_candidates_share_belief_proportionally() {
        // kettle f = 0.5, toaster f = 1.0: total belief 0.95 split 1:2
        let c = corpus("Kettle9000", &[("Server", "AcmeToast/1")], "/api/toast");
        let o = match_web_patterns(&c, &db(), &IdentifyConfig::default()).unwrap();
        assert!((o.belief(&identity("Kettle9000")) - 0.95 / 3.0).abs() < 1e-12);
        assert!((o.belief(&identity("Toaster2")) - 0.95 * 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let c = WebCorpus { device_id: DeviceId::new("d"), pages: vec![] };
        assert!(matches!(
            match_web_patterns(&c, &db(), &IdentifyConfig::default()),
            Err(IdentifyError::EmptyCorpus)
        ));
    }

    #[test]
    fn invalid_signatures_are_rejected() {
        assert!(matches!(SignatureDb::new(&[]), Err(IdentifyError::NoSignatures)));
        let bad = FingerprintSignature {
            signature_id: "bad".into(),
            identity: identity("X"),
            patterns: vec![WebPattern {
                location: PatternLocation::Body,
                matcher: Matcher::Regex("(".into()),
                weight: 1.0,
            }],
        };
        assert!(SignatureDb::new(std::slice::from_ref(&bad)).is_err());
        let zero = FingerprintSignature { patterns: vec![literal(PatternLocation::Body, "x", 0.0)], ..bad.clone() };
        assert!(SignatureDb::new(&[zero]).is_err());
        let none = FingerprintSignature { patterns: vec![], ..bad };
        assert!(SignatureDb::new(&[none]).is_err());
    }

    #[test]
    fn signature_wire_format() {
        let json = r#"{"signature_id":"s","identity":{"vendor":"A","model":"B","firmware_version":"*"},
            "patterns":[{"location":{"header":"Server"},"matcher":{"regex":"^B/"},"weight":2},
                        {"location":"body","matcher":{"literal":"B"}}]}"#;
        let sig: FingerprintSignature = serde_json::from_str(json).unwrap();
        assert_eq!(sig.patterns[0].location, PatternLocation::Header("Server".into()));
        assert_eq!(sig.patterns[1].weight, 1.0);
    }
}
