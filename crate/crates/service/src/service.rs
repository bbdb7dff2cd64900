//! Synchronous service core shared by the HTTP API and the CLI.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Condvar, Mutex, RwLock, RwLockReadGuard};

use chrono::{DateTime, NaiveDate, Utc};
use iotrisk_core::enrich::{entry_applies, FirmwareManifest, VulnerabilityFeedEntry};
use iotrisk_core::identify::{FingerprintSignature, SkewProfile};
use iotrisk_core::kb::KnowledgeBase;
use iotrisk_core::pipeline::{assess_device, assess_model, AssessmentOutcome, PipelineError};
use iotrisk_core::{
    Color, DeviceCategory, DeviceId, DeviceRecord, FutureRiskLevel, ModelKey, RiskAssessment, RiskLevel,
};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::config::ServiceConfig;
use crate::notify::{notify_on_change, Notification, Sink, Subscription, SubscriptionRequest, SubscriptionTarget};
use crate::store::{AssessmentState, Store, StoreData};
use crate::views::{guided_view, rich_view, DeviceSummary, ViewPayload, ViewVersion};
use crate::ServiceError;

/// Most recent notifications kept in the store.
const NOTIFICATION_HISTORY: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RegisterRequest {
    /// Caller-chosen id. A random id is assigned when absent.
    #[serde(default)]
    pub device_id: Option<DeviceId>,
    pub network_address: String,
    pub category: DeviceCategory,
    pub device_type: String,
    pub owner: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Registration {
    pub device_id: DeviceId,
    /// False when an existing record with the same address and owner was
    /// returned.
    pub created: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum AssessmentStatus {
    Pending,
    Assessed,
    Unidentified,
}

/// One row of the device list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DeviceListRow {
    pub device_id: DeviceId,
    pub device_type: String,
    pub owner: String,
    pub category: DeviceCategory,
    pub network_address: String,
    pub status: AssessmentStatus,
    pub model: Option<String>,
    pub current_risk: Option<RiskLevel>,
    pub color: Option<Color>,
    pub future_risk: Option<FutureRiskLevel>,
    pub cve_count: Option<usize>,
    pub as_of: Option<NaiveDate>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ListFilter {
    #[serde(default)]
    pub owner: Option<String>,
    #[serde(default)]
    pub category: Option<DeviceCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DeviceDetail {
    pub device: DeviceRecord,
    pub assessment: Option<AssessmentState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ModelCard {
    pub vendor: String,
    pub model: String,
    pub display_name: String,
    pub firmware_version: String,
    pub version_assumed: bool,
    pub color: Color,
    pub current_risk: RiskLevel,
    pub future_risk: FutureRiskLevel,
    pub assessment: RiskAssessment,
    /// Registered devices currently identified as this model.
    pub registered_devices: Vec<DeviceId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CategoryComparison {
    pub category: String,
    pub as_of: NaiveDate,
    /// Best first.
    pub cards: Vec<ModelCard>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct IngestReport {
    pub kind: String,
    pub accepted: usize,
    pub total: usize,
}

/// A notification waiting to be delivered to its sink.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub sink: Sink,
    pub notification: Notification,
}

#[derive(Debug, Clone)]
pub struct AssessmentRun {
    pub assessment: RiskAssessment,
    /// Empty for callers that joined an in-flight run.
    pub outbound: Vec<Outbound>,
}

type RunResult = Result<RiskAssessment, ServiceError>;

#[derive(Default)]
struct Flight {
    result: Mutex<Option<RunResult>>,
    done: Condvar,
}

type Clock = Box<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub struct Service {
    config: ServiceConfig,
    kb: RwLock<KnowledgeBase>,
    store: Store,
    flights: Mutex<HashMap<(DeviceId, NaiveDate), Arc<Flight>>>,
    clock: Clock,
}

impl Service {
    pub fn open(config: ServiceConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let kb = KnowledgeBase::load(&config.data_dir).map_err(|e| ServiceError::Config(e.to_string()))?;
        let store = Store::open(&config.store_path)?;
        info!(
            data_dir = %config.data_dir.display(),
            store = %config.store_path.display(),
            devices = store.read().devices.len(),
            "service opened"
        );
        Ok(Self { config, kb: RwLock::new(kb), store, flights: Mutex::default(), clock: Box::new(Utc::now) })
    }

    /// Replaces the wall clock used for `generated_at` and `created_at`.
    pub fn with_clock(mut self, clock: impl Fn() -> DateTime<Utc> + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn kb(&self) -> RwLockReadGuard<'_, KnowledgeBase> {
        self.kb.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// The configured assessment date, or today.
    pub fn default_as_of(&self) -> NaiveDate {
        self.config.as_of.unwrap_or_else(|| (self.clock)().date_naive())
    }

    pub fn register(&self, req: RegisterRequest) -> Result<Registration, ServiceError> {
        let now = (self.clock)();
        self.store.update(|data| {
            if let Some(existing) = data
                .devices
                .values()
                .find(|d| d.network_address == req.network_address && d.owner == req.owner)
            {
                if req.device_id.as_ref().is_some_and(|id| *id != existing.device_id) {
                    return Err(ServiceError::Validation(format!(
                        "{} for owner {} is already registered as {}",
                        req.network_address, req.owner, existing.device_id
                    )));
                }
                return Ok(Registration { device_id: existing.device_id.clone(), created: false });
            }
            let device_id = req.device_id.clone().unwrap_or_else(|| DeviceId::new(uuid::Uuid::new_v4().to_string()));
            if data.devices.contains_key(&device_id) {
                return Err(ServiceError::Validation(format!("device id {device_id} is already taken")));
            }
            let record = DeviceRecord {
                device_id: device_id.clone(),
                network_address: req.network_address.clone(),
                category: req.category,
                device_type: req.device_type.clone(),
                owner: req.owner.clone(),
                identity: None,
                registered_at: now,
            };
            record.validate().map_err(|e| ServiceError::Validation(e.to_string()))?;
            data.devices.insert(device_id.clone(), record);
            info!(device = %device_id, owner = %req.owner, "device registered");
            Ok(Registration { device_id, created: true })
        })
    }

    /// Registers every device of the demo fixture set. Returns their ids in
    /// fixture order.
    pub fn register_demo(&self) -> Result<Vec<DeviceId>, ServiceError> {
        let demo = self.kb().demo().cloned().ok_or_else(|| ServiceError::Config("no demo.json in data dir".into()))?;
        demo.devices
            .into_iter()
            .map(|d| {
                self.register(RegisterRequest {
                    device_id: Some(d.device_id),
                    network_address: d.network_address,
                    category: d.category,
                    device_type: d.device_type,
                    owner: d.owner,
                })
                .map(|r| r.device_id)
            })
            .collect()
    }

    pub fn get_device(&self, id: &DeviceId) -> Result<DeviceDetail, ServiceError> {
        let data = self.store.read();
        let device = data.devices.get(id).cloned().ok_or_else(|| ServiceError::UnknownDevice(id.to_string()))?;
        Ok(DeviceDetail { device, assessment: data.assessments.get(id).cloned() })
    }

    /// The latest successful assessment of a device.
    pub fn get_assessment(&self, id: &DeviceId) -> Result<RiskAssessment, ServiceError> {
        self.get_device(id)?
            .assessment
            .as_ref()
            .and_then(|s| s.assessment().cloned())
            .ok_or_else(|| ServiceError::NoAssessment(id.to_string()))
    }

    /// Runs identify, enrich and score for a registered device. Concurrent
    /// calls for the same device and date share one run.
    pub fn run_assessment(&self, id: &DeviceId, as_of: NaiveDate) -> Result<AssessmentRun, ServiceError> {
        if !self.store.read().devices.contains_key(id) {
            return Err(ServiceError::UnknownDevice(id.to_string()));
        }
        let key = (id.clone(), as_of);
        let (flight, leader) = {
            let mut flights = self.flights.lock().unwrap_or_else(|e| e.into_inner());
            match flights.get(&key) {
                Some(f) => (f.clone(), false),
                None => {
                    let f = Arc::new(Flight::default());
                    flights.insert(key.clone(), f.clone());
                    (f, true)
                }
            }
        };
        if !leader {
            let mut result = flight.result.lock().unwrap_or_else(|e| e.into_inner());
            while result.is_none() {
                result = flight.done.wait(result).unwrap_or_else(|e| e.into_inner());
            }
            let assessment = result.clone().expect("result present")?;
            return Ok(AssessmentRun { assessment, outbound: Vec::new() });
        }
        let outcome = self.assess_now(id, as_of);
        let shared = outcome.as_ref().map(|run| run.assessment.clone()).map_err(Clone::clone);
        *flight.result.lock().unwrap_or_else(|e| e.into_inner()) = Some(shared);
        flight.done.notify_all();
        self.flights.lock().unwrap_or_else(|e| e.into_inner()).remove(&key);
        outcome
    }

    fn assess_now(&self, id: &DeviceId, as_of: NaiveDate) -> Result<AssessmentRun, ServiceError> {
        let generated_at = (self.clock)();
        let outcome = {
            let kb = self.kb();
            assess_device(&kb, id, &self.config.pipeline(), as_of, generated_at)
        };
        let (resolved, report, assessment) = match outcome {
            Ok(AssessmentOutcome::Assessed { resolved, report, assessment }) => (resolved, report, assessment),
            Ok(AssessmentOutcome::Unidentified { report }) => {
                let reason = "no model reached the identification threshold".to_string();
                return Err(self.record_unidentified(id, as_of, generated_at, reason, Some(report)));
            }
            Err(e @ PipelineError::NoEvidence(_)) => {
                return Err(self.record_unidentified(id, as_of, generated_at, e.to_string(), None));
            }
            Err(e) => return Err(e.into()),
        };
        self.store.update(|data| {
            let previous = data.assessments.get(id).and_then(|s| s.assessment().cloned());
            let outbound = previous
                .as_ref()
                .and_then(|old| notify_on_change(old, &assessment))
                .map(|delta| fan_out(data, &assessment, delta, generated_at))
                .unwrap_or_default();
            if let Some(device) = data.devices.get_mut(id) {
                device.identity = Some(resolved.clone());
            }
            data.assessments.insert(
                id.clone(),
                AssessmentState::Assessed { assessment: assessment.clone(), identification: report.clone() },
            );
            Ok(AssessmentRun { assessment: assessment.clone(), outbound })
        })
    }

    fn record_unidentified(
        &self,
        id: &DeviceId,
        as_of: NaiveDate,
        generated_at: DateTime<Utc>,
        reason: String,
        identification: Option<iotrisk_core::identify::IdentificationReport>,
    ) -> ServiceError {
        warn!(device = %id, %reason, "identification failed");
        let stored = self.store.update(|data| {
            if let Some(device) = data.devices.get_mut(id) {
                device.identity = None;
            }
            data.assessments.insert(
                id.clone(),
                AssessmentState::Unidentified { as_of, reason: reason.clone(), generated_at, identification },
            );
            Ok(())
        });
        match stored {
            Ok(()) => ServiceError::IdentificationFailed { reason },
            Err(e) => e,
        }
    }

    pub fn get_view(&self, id: &DeviceId, version: ViewVersion) -> Result<ViewPayload, ServiceError> {
        let detail = self.get_device(id)?;
        let assessment = detail
            .assessment
            .as_ref()
            .and_then(|s| s.assessment())
            .ok_or_else(|| ServiceError::NoAssessment(id.to_string()))?;
        let summary = DeviceSummary::new(&detail.device, assessment);
        Ok(match version {
            ViewVersion::Guided => {
                ViewPayload::Guided(guided_view(summary, assessment, self.affected_releases(assessment)))
            }
            ViewVersion::Rich => ViewPayload::Rich(rich_view(summary, assessment)),
        })
    }

    /// Releases of the assessed model, up to `as_of`, that carry at least one
    /// CVE from the assessment's table.
    fn affected_releases(&self, a: &RiskAssessment) -> usize {
        let kb = self.kb();
        let ids: BTreeSet<&str> = a.cve_table.iter().map(|v| v.cve_id.as_str()).collect();
        let entries: Vec<&VulnerabilityFeedEntry> = kb.feed().iter().filter(|e| ids.contains(e.cve_id.as_str())).collect();
        kb.history(&a.identity.key())
            .iter()
            .filter(|m| m.release_date <= a.as_of)
            .filter(|m| entries.iter().any(|e| entry_applies(e, m)))
            .count()
    }

    /// Devices sorted by current risk (highest first, unassessed last), then
    /// device type and id.
    pub fn list_devices(&self, filter: &ListFilter) -> Vec<DeviceListRow> {
        let data = self.store.read();
        let mut rows: Vec<DeviceListRow> = data
            .devices
            .values()
            .filter(|d| filter.owner.as_ref().is_none_or(|o| *o == d.owner))
            .filter(|d| filter.category.is_none_or(|c| c == d.category))
            .map(|d| {
                let state = data.assessments.get(&d.device_id);
                let assessment = state.and_then(|s| s.assessment());
                DeviceListRow {
                    device_id: d.device_id.clone(),
                    device_type: d.device_type.clone(),
                    owner: d.owner.clone(),
                    category: d.category,
                    network_address: d.network_address.clone(),
                    status: match state {
                        None => AssessmentStatus::Pending,
                        Some(AssessmentState::Assessed { .. }) => AssessmentStatus::Assessed,
                        Some(AssessmentState::Unidentified { .. }) => AssessmentStatus::Unidentified,
                    },
                    model: assessment.map(|a| format!("{} {}", a.identity.vendor, a.identity.model)),
                    current_risk: assessment.map(|a| a.current_risk),
                    color: assessment.map(|a| a.color()),
                    future_risk: assessment.map(|a| a.future_risk),
                    cve_count: assessment.map(|a| a.cve_table.len()),
                    as_of: assessment.map(|a| a.as_of),
                }
            })
            .collect();
        rows.sort_by(|a, b| {
            b.current_risk
                .cmp(&a.current_risk)
                .then_with(|| a.device_type.to_lowercase().cmp(&b.device_type.to_lowercase()))
                .then_with(|| a.device_id.cmp(&b.device_id))
        });
        rows
    }

    /// Assesses every catalog model of a category at its latest release up
    /// to `as_of`. Cards are sorted best first.
    pub fn compare_category(&self, label: &str, as_of: NaiveDate) -> Result<CategoryComparison, ServiceError> {
        let generated_at = (self.clock)();
        let kb = self.kb();
        let entries = kb.category(label)?;
        let data = self.store.read();
        let mut cards = Vec::with_capacity(entries.len());
        for entry in entries {
            let key = entry.key();
            let device = DeviceId::new(format!("catalog:{}/{}", key.vendor, key.model));
            let (resolved, assessment) =
                assess_model(&kb, &device, &key, None, 1.0, &self.config.scoring, as_of, generated_at)?;
            let registered_devices = data
                .devices
                .values()
                .filter(|d| d.identity.as_ref().is_some_and(|r| key.matches(&r.identity)))
                .map(|d| d.device_id.clone())
                .collect();
            cards.push(ModelCard {
                vendor: key.vendor.clone(),
                model: key.model.clone(),
                display_name: entry.display_name.clone(),
                firmware_version: resolved.identity.firmware_version.clone(),
                version_assumed: resolved.version_assumed,
                color: assessment.color(),
                current_risk: assessment.current_risk,
                future_risk: assessment.future_risk,
                assessment,
                registered_devices,
            });
        }
        cards.sort_by(|a, b| {
            a.current_risk
                .cmp(&b.current_risk)
                .then_with(|| a.future_risk.cmp(&b.future_risk))
                .then_with(|| a.display_name.cmp(&b.display_name))
        });
        Ok(CategoryComparison { category: label.to_lowercase(), as_of, cards })
    }

    pub fn subscribe(&self, req: SubscriptionRequest) -> Result<Subscription, ServiceError> {
        req.sink.validate()?;
        if let SubscriptionTarget::Model { vendor, model } = &req.target {
            if self.kb().history(&ModelKey::new(vendor, model)).is_empty() {
                return Err(ServiceError::UnknownTarget(format!("model {vendor} {model}")));
            }
        }
        let now = (self.clock)();
        self.store.update(|data| {
            if let SubscriptionTarget::Device { device_id } = &req.target {
                if !data.devices.contains_key(device_id) {
                    return Err(ServiceError::UnknownTarget(format!("device {device_id}")));
                }
            }
            let sub = Subscription {
                subscription_id: uuid::Uuid::new_v4().to_string(),
                target: req.target.clone(),
                sink: req.sink.clone(),
                created_at: now,
            };
            data.subscriptions.insert(sub.subscription_id.clone(), sub.clone());
            Ok(sub)
        })
    }

    pub fn unsubscribe(&self, id: &str) -> Result<(), ServiceError> {
        self.store.update(|data| {
            data.subscriptions
                .remove(id)
                .map(|_| ())
                .ok_or_else(|| ServiceError::UnknownSubscription(id.to_string()))
        })
    }

    pub fn subscriptions(&self) -> Vec<Subscription> {
        self.store.read().subscriptions.values().cloned().collect()
    }

    pub fn notifications(&self) -> Vec<Notification> {
        self.store.read().notifications.clone()
    }

    pub fn ingest_feed_text(&self, text: &str, origin: &str) -> Result<IngestReport, ServiceError> {
        let entries = iotrisk_core::enrich::parse_feed(text, origin).map_err(|e| ServiceError::Ingest(e.to_string()))?;
        let accepted = entries.len();
        let total = self.kb_write(|kb| kb.ingest_feed(entries))?;
        Ok(IngestReport { kind: "feed".into(), accepted, total })
    }

    pub fn ingest_manifests(&self, manifests: Vec<FirmwareManifest>) -> Result<IngestReport, ServiceError> {
        let accepted = manifests.len();
        self.kb_write(|kb| kb.ingest_manifests(manifests))?;
        let total = {
            let kb = self.kb();
            kb.models().map(|k| kb.history(k).len()).sum()
        };
        Ok(IngestReport { kind: "manifests".into(), accepted, total })
    }

    pub fn ingest_signatures(&self, signatures: Vec<FingerprintSignature>) -> Result<IngestReport, ServiceError> {
        let accepted = signatures.len();
        let total = self.kb_write(|kb| kb.ingest_signatures(signatures))?;
        Ok(IngestReport { kind: "signatures".into(), accepted, total })
    }

    pub fn ingest_profiles(&self, profiles: Vec<SkewProfile>) -> Result<IngestReport, ServiceError> {
        let accepted = profiles.len();
        let total = self.kb_write(|kb| kb.ingest_profiles(profiles))?;
        Ok(IngestReport { kind: "profiles".into(), accepted, total })
    }

    fn kb_write<T>(
        &self,
        f: impl FnOnce(&mut KnowledgeBase) -> Result<T, iotrisk_core::kb::KbError>,
    ) -> Result<T, ServiceError> {
        let mut kb = self.kb.write().unwrap_or_else(|e| e.into_inner());
        f(&mut kb).map_err(|e| ServiceError::Ingest(e.to_string()))
    }
}

fn fan_out(
    data: &mut StoreData,
    assessment: &RiskAssessment,
    delta: crate::notify::AssessmentDelta,
    now: DateTime<Utc>,
) -> Vec<Outbound> {
    let matching: Vec<Subscription> =
        data.subscriptions.values().filter(|s| s.target.matches(assessment)).cloned().collect();
    let outbound: Vec<Outbound> = matching
        .into_iter()
        .map(|s| Outbound {
            notification: Notification {
                notification_id: uuid::Uuid::new_v4().to_string(),
                subscription_id: s.subscription_id.clone(),
                device_id: assessment.device_id.clone(),
                delta: delta.clone(),
                created_at: now,
            },
            sink: s.sink,
        })
        .collect();
    data.notifications.extend(outbound.iter().map(|o| o.notification.clone()));
    let excess = data.notifications.len().saturating_sub(NOTIFICATION_HISTORY);
    data.notifications.drain(..excess);
    outbound
}
