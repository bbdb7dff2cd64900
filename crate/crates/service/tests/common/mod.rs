#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Utc};
use iotrisk_service::{Service, ServiceConfig};
use tempfile::TempDir;

pub fn fixture_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            if entry.file_name() != "state" {
                copy_dir(&entry.path(), &target);
            }
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

pub fn demo_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 6, 1).unwrap()
}

pub fn fixed_clock() -> DateTime<Utc> {
    DateTime::parse_from_rfc3339("2021-06-01T09:00:00Z").unwrap().with_timezone(&Utc)
}

/// A private copy of the fixture data plus a store path inside it.
pub struct Sandbox {
    pub dir: TempDir,
}

impl Sandbox {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        copy_dir(&fixture_root(), &dir.path().join("data"));
        Self { dir }
    }

    pub fn config(&self) -> ServiceConfig {
        ServiceConfig {
            data_dir: self.dir.path().join("data"),
            store_path: self.dir.path().join("state/store.json"),
            as_of: Some(demo_date()),
            ..ServiceConfig::default()
        }
    }

    pub fn open(&self) -> Arc<Service> {
        Arc::new(Service::open(self.config()).unwrap().with_clock(fixed_clock))
    }
}
