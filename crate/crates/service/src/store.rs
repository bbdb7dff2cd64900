//! Single-file JSON store for devices, assessments, subscriptions and
//! notifications.
//!
//! Readers share an in-memory snapshot. Writers are serialized: each update
//! mutates a copy, writes it to a temporary file next to the store and renames
//! it into place before the new snapshot becomes visible.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock, RwLockReadGuard};

use chrono::{DateTime, NaiveDate, Utc};
use iotrisk_core::identify::IdentificationReport;
use iotrisk_core::{DeviceId, DeviceRecord, RiskAssessment};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::notify::{Notification, Subscription};
use crate::ServiceError;

/// Latest assessment outcome for a device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AssessmentState {
    Assessed {
        assessment: RiskAssessment,
        identification: IdentificationReport,
    },
    /// Identification failed; no risk fields are recorded.
    Unidentified {
        as_of: NaiveDate,
        reason: String,
        generated_at: DateTime<Utc>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        identification: Option<IdentificationReport>,
    },
}

impl AssessmentState {
    pub fn assessment(&self) -> Option<&RiskAssessment> {
        match self {
            AssessmentState::Assessed { assessment, .. } => Some(assessment),
            AssessmentState::Unidentified { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreData {
    pub devices: BTreeMap<DeviceId, DeviceRecord>,
    pub assessments: BTreeMap<DeviceId, AssessmentState>,
    pub subscriptions: BTreeMap<String, Subscription>,
    pub notifications: Vec<Notification>,
}

pub struct Store {
    path: PathBuf,
    data: RwLock<StoreData>,
    writer: Mutex<()>,
}

impl Store {
    /// Opens the store, starting empty if the file does not exist yet.
    pub fn open(path: &Path) -> Result<Self, ServiceError> {
        let data = if path.exists() {
            let text = fs::read_to_string(path).map_err(|e| ServiceError::storage(path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| ServiceError::Storage(format!("{}: corrupt store: {e}", path.display())))?
        } else {
            StoreData::default()
        };
        Ok(Self { path: path.to_path_buf(), data: RwLock::new(data), writer: Mutex::new(()) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn read(&self) -> RwLockReadGuard<'_, StoreData> {
        self.data.read().unwrap_or_else(|e| e.into_inner())
    }

    /// Applies `f` to a copy of the data and persists it. Nothing changes if
    /// `f` fails or the write fails.
    pub fn update<T>(&self, f: impl FnOnce(&mut StoreData) -> Result<T, ServiceError>) -> Result<T, ServiceError> {
        let _writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut next = self.read().clone();
        let out = f(&mut next)?;
        self.persist(&next)?;
        *self.data.write().unwrap_or_else(|e| e.into_inner()) = next;
        Ok(out)
    }

    fn persist(&self, data: &StoreData) -> Result<(), ServiceError> {
        let dir = match self.path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        fs::create_dir_all(dir).map_err(|e| ServiceError::storage(dir, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| ServiceError::storage(dir, e))?;
        let bytes = serde_json::to_vec_pretty(data).expect("store data serializes");
        tmp.write_all(&bytes).map_err(|e| ServiceError::storage(tmp.path(), e))?;
        tmp.as_file().sync_all().map_err(|e| ServiceError::storage(tmp.path(), e))?;
        tmp.persist(&self.path).map_err(|e| ServiceError::storage(&self.path, e.error))?;
        Ok(())
    }
}
