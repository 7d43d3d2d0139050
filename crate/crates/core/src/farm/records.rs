//! Build records and built archives, both first-write-wins per build key.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::atom::BuildKey;
use crate::db::write_atomic;
use crate::store::{artifact_path, artifact_url};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuildStatus {
    Pending,
    Built,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildRecord {
    pub key: BuildKey,
    pub status: BuildStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_message: Option<String>,
    pub created_at: Duration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<Duration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completed_at: Option<Duration>,
}

impl BuildRecord {
    pub fn is_terminal(&self) -> bool {
        self.status != BuildStatus::Pending
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BuildResult {
    Built { url: String },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PendingOutcome {
    Created(BuildRecord),
    Existing(BuildRecord),
}

#[derive(Debug)]
pub struct RecordStore {
    records: Mutex<BTreeMap<BuildKey, BuildRecord>>,
    path: Option<PathBuf>,
}

impl Default for RecordStore {
    fn default() -> Self {
        Self::new()
    }
}

impl RecordStore {
    pub fn new() -> Self {
        RecordStore { records: Mutex::new(BTreeMap::new()), path: None }
    }

    /// Records persisted as a JSON list at `path`, loaded if present.
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let records: Vec<BuildRecord> = match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(io::Error::other)?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e),
        };
        let records = records.into_iter().map(|r| (r.key.clone(), r)).collect();
        Ok(RecordStore { records: Mutex::new(records), path: Some(path) })
    }

    fn persist(&self, records: &BTreeMap<BuildKey, BuildRecord>) {
        if let Some(path) = &self.path {
            let list: Vec<&BuildRecord> = records.values().collect();
            let bytes = serde_json::to_vec_pretty(&list).expect("records serialize");
            if let Err(e) = write_atomic(path, &bytes) {
                log::error!("failed to persist records to {}: {e}", path.display());
            }
        }
    }

    pub fn get(&self, key: &BuildKey) -> Option<BuildRecord> {
        self.records.lock().unwrap().get(key).cloned()
    }

    /// Atomically returns the existing record or inserts a pending one.
    pub fn get_or_create_pending(&self, key: &BuildKey, now: Duration) -> PendingOutcome {
        let mut records = self.records.lock().unwrap();
        if let Some(existing) = records.get(key) {
            return PendingOutcome::Existing(existing.clone());
        }
        let rec = BuildRecord {
            key: key.clone(),
            status: BuildStatus::Pending,
            artifact_url: None,
            error_message: None,
            created_at: now,
            started_at: None,
            completed_at: None,
        };
        records.insert(key.clone(), rec.clone());
        self.persist(&records);
        PendingOutcome::Created(rec)
    }

    /// Moves a record to its terminal state. The first terminal write wins:
    /// if the record is already terminal it is returned unchanged as `Err`.
    pub fn finalize(
        &self,
        key: &BuildKey,
        result: BuildResult,
        started_at: Duration,
        now: Duration,
    ) -> Result<BuildRecord, Box<BuildRecord>> {
        let mut records = self.records.lock().unwrap();
        let created_at = match records.get(key) {
            Some(existing) if existing.is_terminal() => return Err(Box::new(existing.clone())),
            Some(existing) => existing.created_at,
            None => started_at,
        };
        let (status, artifact_url, error_message) = match result {
            BuildResult::Built { url } => (BuildStatus::Built, Some(url), None),
            BuildResult::Failed { error } => (BuildStatus::Failed, None, Some(error)),
        };
        let rec = BuildRecord {
            key: key.clone(),
            status,
            artifact_url,
            error_message,
            created_at,
            started_at: Some(started_at),
            completed_at: Some(now),
        };
        records.insert(key.clone(), rec.clone());
        self.persist(&records);
        Ok(rec)
    }

    pub fn all(&self) -> Vec<BuildRecord> {
        self.records.lock().unwrap().values().cloned().collect()
    }
}

/// Built archives keyed by build key. Optionally mirrored to
/// `<root>/artifacts/<canonical-key>.tar` so a directory store can serve them.
#[derive(Debug)]
pub struct ArtifactStore {
    blobs: Mutex<BTreeMap<BuildKey, Vec<u8>>>,
    root: Option<PathBuf>,
}

impl Default for ArtifactStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ArtifactStore {
    pub fn new() -> Self {
        ArtifactStore { blobs: Mutex::new(BTreeMap::new()), root: None }
    }

    pub fn open(root: impl Into<PathBuf>) -> Self {
        ArtifactStore { blobs: Mutex::new(BTreeMap::new()), root: Some(root.into()) }
    }

    fn file_for(&self, key: &BuildKey) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join(artifact_path(key)))
    }

    /// Stores `bytes` unless the key already has an archive; either way
    /// returns the archive's url. The flag reports whether this call wrote it.
    pub fn store(&self, key: &BuildKey, bytes: &[u8]) -> io::Result<(String, bool)> {
        let mut blobs = self.blobs.lock().unwrap();
        let url = artifact_url(key);
        if blobs.contains_key(key) {
            return Ok((url, false));
        }
        if let Some(file) = self.file_for(key) {
            if file.exists() {
                blobs.insert(key.clone(), fs::read(&file)?);
                return Ok((url, false));
            }
            write_atomic(&file, bytes)?;
        }
        blobs.insert(key.clone(), bytes.to_vec());
        Ok((url, true))
    }

    pub fn get(&self, key: &BuildKey) -> Option<Vec<u8>> {
        if let Some(bytes) = self.blobs.lock().unwrap().get(key) {
            return Some(bytes.clone());
        }
        self.file_for(key).and_then(|f| fs::read(f).ok())
    }

    pub fn len(&self) -> usize {
        self.blobs.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn keys(&self) -> Vec<BuildKey> {
        self.blobs.lock().unwrap().keys().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(s: &str) -> BuildKey {
        BuildKey::parse(s).unwrap()
    }

    #[test]
    fn artifact_first_write_wins() {
        let store = ArtifactStore::new();
        let k = key("sys-libs/ncurses-6.1-r2[]");
        let (url, fresh) = store.store(&k, b"first").unwrap();
        assert!(fresh);
        assert_eq!(url, "store://sys-libs/ncurses-6.1-r2[]");
        let (again, fresh) = store.store(&k, b"second").unwrap();
        assert!(!fresh);
        assert_eq!(again, url);
        assert_eq!(store.get(&k).unwrap(), b"first");
    }

    #[test]
    fn artifact_files_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let k = key("a/b-1[x]");
        ArtifactStore::open(dir.path()).store(&k, b"bytes").unwrap();
        assert!(dir.path().join("artifacts/a/b-1[x].tar").is_file());
        let reopened = ArtifactStore::open(dir.path());
        assert_eq!(reopened.get(&k).unwrap(), b"bytes");
        assert!(!reopened.store(&k, b"other").unwrap().1);
        assert_eq!(reopened.get(&k).unwrap(), b"bytes");
    }

    #[test]
    fn records_are_first_write_wins() {
        let store = RecordStore::new();
        let k = key("a/b-1[]");
        assert!(matches!(store.get_or_create_pending(&k, Duration::ZERO), PendingOutcome::Created(_)));
        assert!(matches!(store.get_or_create_pending(&k, Duration::ZERO), PendingOutcome::Existing(_)));
        let built = store
            .finalize(&k, BuildResult::Built { url: "store://a/b-1[]".into() }, Duration::from_secs(1), Duration::from_secs(5))
            .unwrap();
        assert_eq!(built.status, BuildStatus::Built);
        assert_eq!(built.created_at, Duration::ZERO);
        let lost = store
            .finalize(&k, BuildResult::Failed { error: "late".into() }, Duration::ZERO, Duration::from_secs(9))
            .unwrap_err();
        assert_eq!(*lost, built);
        assert_eq!(store.get(&k).unwrap(), built);
    }

    #[test]
    fn records_persist() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.json");
        let k = key("a/b-1[]");
        RecordStore::open(&path).unwrap().get_or_create_pending(&k, Duration::from_secs(2));
        let reopened = RecordStore::open(&path).unwrap();
        assert_eq!(reopened.get(&k).unwrap().status, BuildStatus::Pending);
    }
}
