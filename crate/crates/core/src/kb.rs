//! The on-disk knowledge base: vulnerability feed, firmware manifests,
//! fingerprint signatures, skew profiles, the model catalog and per-device
//! evidence fixtures.
//!
//! Layout under the data directory:
//!
//! ```text
//! feed.json               vulnerability feed
//! manifests/*.json        one manifest per firmware image
//! blobs/                  raw images referenced by manifests
//! signatures.json         web fingerprint signatures
//! profiles.json           clock-skew profiles
//! catalog.json            models offered per category
//! aliases.json            optional model alias table
//! corpora/<device>.json   captured web pages per device
//! traces/<device>.json    TCP timestamp traces (or .csv + .csv.meta.json)
//! demo.json               demo device set and assessment date
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use schemars::JsonSchema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::enrich::{
    extract_components, normalize_feed, order_history, parse_feed, EnrichError, FirmwareManifest, FirmwareSource,
    VulnerabilityFeedEntry,
};
use crate::identify::{FingerprintSignature, IdentifyError, SignatureDb, SkewProfile, TimestampTrace, WebCorpus};
use crate::model::{DeviceCategory, DeviceId, ModelIdentity, ModelKey};

#[derive(Debug, Error)]
pub enum KbError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Enrich(#[from] EnrichError),
    #[error(transparent)]
    Identify(#[from] IdentifyError),
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
}

impl KbError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CatalogEntry {
    /// Lowercase label such as `smartphone` or `nas`.
    pub category: String,
    pub vendor: String,
    pub model: String,
    pub display_name: String,
}

impl CatalogEntry {
    pub fn key(&self) -> ModelKey {
        ModelKey::new(&self.vendor, &self.model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AliasEntry {
    pub model: ModelKey,
    pub also_known_as: Vec<ModelKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DemoDevice {
    pub device_id: DeviceId,
    pub network_address: String,
    pub category: DeviceCategory,
    pub device_type: String,
    pub owner: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DemoSet {
    pub as_of: NaiveDate,
    pub devices: Vec<DemoDevice>,
}

pub struct KnowledgeBase {
    root: PathBuf,
    feed: Vec<VulnerabilityFeedEntry>,
    histories: BTreeMap<ModelKey, Vec<FirmwareManifest>>,
    signatures: Vec<FingerprintSignature>,
    signature_db: Option<SignatureDb>,
    profiles: Vec<SkewProfile>,
    catalog: Vec<CatalogEntry>,
    demo: Option<DemoSet>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, KbError> {
    let text = fs::read_to_string(path).map_err(|e| KbError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| KbError::Parse { path: path.display().to_string(), message: e.to_string() })
}

fn read_optional_json<T: DeserializeOwned + Default>(path: &Path) -> Result<T, KbError> {
    if path.exists() {
        read_json(path)
    } else {
        Ok(T::default())
    }
}

/// Writes through a temporary file in the same directory and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), KbError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| KbError::io(dir, e))?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("file"),
        std::process::id()
    ));
    let mut file = fs::File::create(&tmp).map_err(|e| KbError::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| KbError::io(&tmp, e))?;
    file.sync_all().map_err(|e| KbError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| KbError::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), KbError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("knowledge base types serialize");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn sanitize(part: &str) -> String {
    part.chars()
        .map(|c| match c {
            c if c.is_ascii_alphanumeric() || c == '.' || c == '-' => c,
            ' ' => '-',
            _ => '_',
        })
        .collect()
}

fn manifest_file_name(identity: &ModelIdentity) -> String {
    format!(
        "{}_{}_{}.json",
        sanitize(&identity.vendor),
        sanitize(&identity.model),
        sanitize(&identity.firmware_version)
    )
}

/// Deletes manifest files other than the canonical one that describe any of
/// `identities`, so a re-ingested release is not loaded twice.
fn remove_stale_manifests(dir: &Path, identities: &BTreeSet<&ModelIdentity>) -> Result<(), KbError> {
    #[derive(Deserialize)]
    struct Head {
        identity: ModelIdentity,
    }
    if !dir.is_dir() {
        return Ok(());
    }
    for entry in fs::read_dir(dir).map_err(|e| KbError::io(dir, e))? {
        let path = entry.map_err(|e| KbError::io(dir, e))?.path();
        if path.extension().is_none_or(|e| e != "json") {
            continue;
        }
        let Ok(text) = fs::read_to_string(&path) else { continue };
        let Ok(head) = serde_json::from_str::<Head>(&text) else { continue };
        let canonical = path.file_name().is_some_and(|n| *n == *manifest_file_name(&head.identity));
        if identities.contains(&head.identity) && !canonical {
            fs::remove_file(&path).map_err(|e| KbError::io(&path, e))?;
        }
    }
    Ok(())
}

fn group_histories(
    manifests: Vec<FirmwareManifest>,
    aliases: &[AliasEntry],
) -> Result<BTreeMap<ModelKey, Vec<FirmwareManifest>>, KbError> {
    let mut grouped: BTreeMap<ModelKey, Vec<FirmwareManifest>> = BTreeMap::new();
    for mut m in manifests {
        let key = m.key();
        for alias in aliases.iter().filter(|a| a.model == key) {
            for k in &alias.also_known_as {
                if !m.also_known_as.contains(k) {
                    m.also_known_as.push(k.clone());
                }
            }
        }
        grouped.entry(m.key()).or_default().push(m);
    }
    let mut out = BTreeMap::new();
    for (key, history) in grouped {
        out.insert(key, order_history(history)?);
    }
    Ok(out)
}

impl KnowledgeBase {
    pub fn load(root: &Path) -> Result<Self, KbError> {
        let feed_path = root.join("feed.json");
        let feed = if feed_path.exists() {
            let text = fs::read_to_string(&feed_path).map_err(|e| KbError::io(&feed_path, e))?;
            parse_feed(&text, &feed_path.display().to_string())?
        } else {
            Vec::new()
        };

        let mut manifests = Vec::new();
        let dir = root.join("manifests");
        if dir.is_dir() {
            let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
                .map_err(|e| KbError::io(&dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "json"))
                .collect();
            paths.sort();
            for path in paths {
                manifests.push(extract_components(FirmwareSource::Manifest(&path))?);
            }
        }
        let aliases: Vec<AliasEntry> = read_optional_json(&root.join("aliases.json"))?;
        let histories = group_histories(manifests, &aliases)?;

        let signatures: Vec<FingerprintSignature> = read_optional_json(&root.join("signatures.json"))?;
        let signature_db = if signatures.is_empty() { None } else { Some(SignatureDb::new(&signatures)?) };
        let profiles: Vec<SkewProfile> = read_optional_json(&root.join("profiles.json"))?;
        for p in &profiles {
            p.validate()?;
        }
        let catalog: Vec<CatalogEntry> = read_optional_json(&root.join("catalog.json"))?;
        let demo_path = root.join("demo.json");
        let demo = if demo_path.exists() { Some(read_json(&demo_path)?) } else { None };

        debug!(
            root = %root.display(),
            cves = feed.len(),
            models = histories.len(),
            signatures = signatures.len(),
            profiles = profiles.len(),
            "knowledge base loaded"
        );
        Ok(Self {
            root: root.to_path_buf(),
            feed,
            histories,
            signatures,
            signature_db,
            profiles,
            catalog,
            demo,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn feed(&self) -> &[VulnerabilityFeedEntry] {
        &self.feed
    }

    pub fn signatures(&self) -> &[FingerprintSignature] {
        &self.signatures
    }

    pub fn signature_db(&self) -> Option<&SignatureDb> {
        self.signature_db.as_ref()
    }

    pub fn profiles(&self) -> &[SkewProfile] {
        &self.profiles
    }

    pub fn catalog(&self) -> &[CatalogEntry] {
        &self.catalog
    }

    pub fn demo(&self) -> Option<&DemoSet> {
        self.demo.as_ref()
    }

    pub fn models(&self) -> impl Iterator<Item = &ModelKey> {
        self.histories.keys()
    }

    /// All releases of a model, oldest first. Empty for unknown models.
    pub fn history(&self, key: &ModelKey) -> &[FirmwareManifest] {
        self.histories.get(key).map_or(&[], Vec::as_slice)
    }

    /// Firmware versions released on or before `as_of`, oldest first.
    pub fn known_releases(&self, key: &ModelKey, as_of: NaiveDate) -> Vec<String> {
        self.history(key)
            .iter()
            .filter(|m| m.release_date <= as_of)
            .map(|m| m.identity.firmware_version.clone())
            .collect()
    }

    /// Catalog entries for a category label (case-insensitive), in file order.
    pub fn category(&self, label: &str) -> Result<Vec<&CatalogEntry>, KbError> {
        let entries: Vec<_> = self.catalog.iter().filter(|c| c.category.eq_ignore_ascii_case(label)).collect();
        if entries.is_empty() {
            return Err(KbError::UnknownCategory(label.to_string()));
        }
        Ok(entries)
    }

    pub fn corpus_path(&self, device: &DeviceId) -> PathBuf {
        self.root.join("corpora").join(format!("{}.json", sanitize(device.as_str())))
    }

    /// Loads the device's web corpus if a fixture exists.
    pub fn corpus(&self, device: &DeviceId) -> Result<Option<WebCorpus>, KbError> {
        let path = self.corpus_path(device);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(WebCorpus::load(&path)?))
    }

    /// Loads the device's timestamp trace, JSON preferred over CSV.
    pub fn trace(&self, device: &DeviceId) -> Result<Option<TimestampTrace>, KbError> {
        let dir = self.root.join("traces");
        let stem = sanitize(device.as_str());
        for ext in ["json", "csv"] {
            let path = dir.join(format!("{stem}.{ext}"));
            if path.exists() {
                return Ok(Some(TimestampTrace::load(&path)?));
            }
        }
        Ok(None)
    }

    /// Merges feed entries into the feed (highest score wins on duplicate
    /// ids) and persists it. Returns the resulting number of entries.
    pub fn ingest_feed(&mut self, entries: Vec<VulnerabilityFeedEntry>) -> Result<usize, KbError> {
        let mut all = self.feed.clone();
        all.extend(entries);
        let (feed, conflicts) = normalize_feed(all);
        for c in &conflicts {
            warn!(cve = %c.cve_id, kept = c.kept_score, dropped = c.dropped_score, "feed conflict");
        }
        write_json(&self.root.join("feed.json"), &feed)?;
        self.feed = feed;
        Ok(self.feed.len())
    }

    /// Adds or replaces firmware manifests. Each is validated against its
    /// model's existing history before anything is written.
    pub fn ingest_manifests(&mut self, manifests: Vec<FirmwareManifest>) -> Result<usize, KbError> {
        let mut all: Vec<FirmwareManifest> = self.histories.values().flatten().cloned().collect();
        for m in &manifests {
            m.validate().map_err(|message| EnrichError::MalformedManifest {
                origin: m.identity.to_string(),
                message,
            })?;
            all.retain(|existing| existing.identity != m.identity);
        }
        all.extend(manifests.iter().cloned());
        let histories = group_histories(all, &[])?;
        let dir = self.root.join("manifests");
        remove_stale_manifests(&dir, &manifests.iter().map(|m| &m.identity).collect())?;
        for m in &manifests {
            let name = manifest_file_name(&m.identity);
            let mut stored = m.clone();
            // markers have been scanned already; keep the blob path only if
            // it still resolves from the manifests directory
            if stored.raw_blob_path.as_ref().is_some_and(|p| !p.is_absolute()) {
                stored.raw_blob_path = None;
            }
            write_json(&dir.join(name), &stored)?;
        }
        self.histories = histories;
        Ok(manifests.len())
    }

    /// Adds or replaces signatures by id and persists the set.
    pub fn ingest_signatures(&mut self, signatures: Vec<FingerprintSignature>) -> Result<usize, KbError> {
        let mut all = self.signatures.clone();
        for s in signatures {
            all.retain(|e| e.signature_id != s.signature_id);
            all.push(s);
        }
        all.sort_by(|a, b| a.signature_id.cmp(&b.signature_id));
        let db = SignatureDb::new(&all)?;
        write_json(&self.root.join("signatures.json"), &all)?;
        self.signatures = all;
        self.signature_db = Some(db);
        Ok(self.signatures.len())
    }

    /// Adds or replaces skew profiles by identity and persists the set.
    pub fn ingest_profiles(&mut self, profiles: Vec<SkewProfile>) -> Result<usize, KbError> {
        for p in &profiles {
            p.validate()?;
        }
        let mut all = self.profiles.clone();
        for p in profiles {
            all.retain(|e| e.identity != p.identity);
            all.push(p);
        }
        write_json(&self.root.join("profiles.json"), &all)?;
        self.profiles = all;
        Ok(self.profiles.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enrich::Component;
    use crate::model::ModelIdentity;

    fn manifest(version: &str, released: &str) -> FirmwareManifest {
        FirmwareManifest {
            identity: ModelIdentity::new("Acme", "K1", version).unwrap(),
            release_date: released.parse().unwrap(),
            components: vec![Component::new("zlib", "1.2.11")],
            secret_markers: vec![],
            raw_blob_path: None,
            risk_flags: vec![],
            also_known_as: vec![],
        }
    }

    #[test]
    fn empty_directory_loads() {
        let dir = tempfile::tempdir().unwrap();
        let kb = KnowledgeBase::load(dir.path()).unwrap();
        assert!(kb.feed().is_empty());
        assert!(kb.signature_db().is_none());
        assert!(matches!(kb.category("nas"), Err(KbError::UnknownCategory(_))));
    }

    #[test]
    fn ingested_manifests_survive_reload() {
        let dir = tempfile::tempdir().unwrap();
        let mut kb = KnowledgeBase::load(dir.path()).unwrap();
        kb.ingest_manifests(vec![manifest("1.1", "2019-01-01"), manifest("1.0", "2018-01-01")]).unwrap();
        let kb = KnowledgeBase::load(dir.path()).unwrap();
        let key = ModelKey::new("Acme", "K1");
        let versions: Vec<_> = kb.history(&key).iter().map(|m| m.identity.firmware_version.as_str()).collect();
        assert_eq!(versions, ["1.0", "1.1"]);
        assert_eq!(kb.known_releases(&key, "2018-06-01".parse().unwrap()), ["1.0"]);
    }

    #[test]
    fn reingesting_a_release_replaces_its_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("manifests")).unwrap();
        let m = manifest("1.0", "2018-01-01");
        fs::write(dir.path().join("manifests/hand named.json"), serde_json::to_string(&m).unwrap()).unwrap();
        let mut kb = KnowledgeBase::load(dir.path()).unwrap();
        kb.ingest_manifests(vec![m]).unwrap();
        let names: Vec<_> = fs::read_dir(dir.path().join("manifests")).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, ["Acme_K1_1.0.json"]);
        assert!(KnowledgeBase::load(dir.path()).is_ok());
    }

    #[test]
    fn conflicting_release_dates_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut kb = KnowledgeBase::load(dir.path()).unwrap();
        kb.ingest_manifests(vec![manifest("1.0", "2018-01-01")]).unwrap();
        assert!(kb.ingest_manifests(vec![manifest("1.1", "2018-01-01")]).is_err());
        assert_eq!(kb.history(&ModelKey::new("Acme", "K1")).len(), 1);
    }

    #[test]
    fn alias_table_extends_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let mut kb = KnowledgeBase::load(dir.path()).unwrap();
        kb.ingest_manifests(vec![manifest("1.0", "2018-01-01")]).unwrap();
        let aliases = vec![AliasEntry { model: ModelKey::new("Acme", "K1"), also_known_as: vec![ModelKey::new("Acme", "K1S")] }];
        write_json(&dir.path().join("aliases.json"), &aliases).unwrap();
        let kb = KnowledgeBase::load(dir.path()).unwrap();
        assert_eq!(kb.history(&ModelKey::new("Acme", "K1"))[0].also_known_as, [ModelKey::new("Acme", "K1S")]);
    }
}
