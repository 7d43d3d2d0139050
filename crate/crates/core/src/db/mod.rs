//! Flat-file client database.
//!
//! Layout under the database root:
//!
//! ```text
//! <root>/<category>/<name>/metadata.json
//! <root>/<category>/<name>/archives/<canonical-build-key>.tar
//! ```
//!
//! Mutations take an advisory lock file (`<root>/.lock`) for their duration,
//! so there is a single writer per root; readers never lock.

mod sync;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atom::{BuildKey, PackageId};
use crate::version::Version;

pub use sync::{Manifest, SyncReport};

const METADATA_FILE: &str = "metadata.json";
const ARCHIVE_DIR: &str = "archives";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Error)]
pub enum DbError {
    #[error("unknown package {0}")]
    UnknownPackage(PackageId),
    #[error("unknown version {version} of {package}")]
    UnknownVersion { package: PackageId, version: String },
    #[error("{0} is not installed")]
    NotInstalled(PackageId),
    #[error("database at {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("corrupt metadata at {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("store unreachable: {0}")]
    StoreUnreachable(String),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionEntry {
    pub dependencies: Vec<String>,
}

/// One `metadata.json` document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageMetadata {
    pub name: PackageId,
    pub description: String,
    pub versions: BTreeMap<String, VersionEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub installed: Option<String>,
    #[serde(default)]
    pub explicit: bool,
    #[serde(default)]
    pub required_by: Vec<PackageId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub files: Option<Vec<String>>,
}

impl PackageMetadata {
    pub fn new(name: PackageId, description: String, versions: BTreeMap<String, VersionEntry>) -> Self {
        PackageMetadata { name, description, versions, installed: None, explicit: false, required_by: Vec::new(), files: None }
    }

    /// Known versions, ascending. Keys that fail to parse are skipped.
    pub fn known_versions(&self) -> Vec<Version> {
        let mut out: Vec<Version> = self.versions.keys().filter_map(|k| Version::parse(k).ok()).collect();
        out.sort();
        out
    }

    pub fn installed_version(&self) -> Option<Version> {
        self.installed.as_deref().and_then(|v| Version::parse(v).ok())
    }

    /// Structural problems with this document, if any.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(v) = &self.installed {
            if !self.versions.contains_key(v) {
                out.push(format!("{}: installed version {v} not in versions", self.name));
            }
            if self.files.is_none() {
                out.push(format!("{}: installed without a file list", self.name));
            }
        } else {
            if self.explicit {
                out.push(format!("{}: explicit but not installed", self.name));
            }
            if self.files.is_some() {
                out.push(format!("{}: file list present but not installed", self.name));
            }
        }
        let unique: BTreeSet<_> = self.required_by.iter().collect();
        if unique.len() != self.required_by.len() {
            out.push(format!("{}: duplicate required_by entries", self.name));
        }
        for key in self.versions.keys() {
            if Version::parse(key).is_err() {
                out.push(format!("{}: unparseable version key {key}", self.name));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchResult {
    pub package: PackageId,
    pub versions: Vec<Version>,
    pub installed: Option<Version>,
    pub description: String,
}

/// Held while a writer mutates the database; removes the lock file on drop.
#[derive(Debug)]
pub struct DbLock {
    path: PathBuf,
}

impl Drop for DbLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone)]
pub struct LocalDb {
    root: PathBuf,
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

impl LocalDb {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        LocalDb { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn lock(&self) -> Result<DbLock, DbError> {
        fs::create_dir_all(&self.root)?;
        let path = self.root.join(LOCK_FILE);
        for _ in 0..200 {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    let _ = writeln!(f, "{}", std::process::id());
                    return Ok(DbLock { path });
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => thread::sleep(Duration::from_millis(10)),
                Err(e) => return Err(e.into()),
            }
        }
        Err(DbError::Locked(self.root.clone()))
    }

    fn package_dir(&self, pkg: &PackageId) -> PathBuf {
        self.root.join(pkg.category()).join(pkg.name())
    }

    pub fn metadata_path(&self, pkg: &PackageId) -> PathBuf {
        self.package_dir(pkg).join(METADATA_FILE)
    }

    pub fn load(&self, pkg: &PackageId) -> Result<Option<PackageMetadata>, DbError> {
        let path = self.metadata_path(pkg);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| DbError::Corrupt { path, message: e.to_string() }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn require(&self, pkg: &PackageId) -> Result<PackageMetadata, DbError> {
        self.load(pkg)?.ok_or_else(|| DbError::UnknownPackage(pkg.clone()))
    }

    pub(crate) fn encode(meta: &PackageMetadata) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(meta).expect("metadata serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn save(&self, meta: &PackageMetadata) -> Result<(), DbError> {
        write_atomic(&self.metadata_path(&meta.name), &Self::encode(meta))?;
        Ok(())
    }

    /// Every metadata document in the tree, sorted by package.
    pub fn packages(&self) -> Result<Vec<PackageMetadata>, DbError> {
        let mut out = Vec::new();
        let Ok(categories) = fs::read_dir(&self.root) else {
            return Ok(out);
        };
        for cat in categories {
            let cat = cat?;
            if !cat.file_type()?.is_dir() {
                continue;
            }
            for pkg in fs::read_dir(cat.path())? {
                let path = pkg?.path().join(METADATA_FILE);
                match fs::read(&path) {
                    Ok(bytes) => out.push(
                        serde_json::from_slice(&bytes)
                            .map_err(|e| DbError::Corrupt { path: path.clone(), message: e.to_string() })?,
                    ),
                    Err(e) if e.kind() == io::ErrorKind::NotFound => continue,
                    Err(e) => return Err(e.into()),
                }
            }
        }
        out.sort_by(|a: &PackageMetadata, b| a.name.cmp(&b.name));
        Ok(out)
    }

    /// All documents keyed by package, for resolution.
    pub fn snapshot(&self) -> Result<BTreeMap<PackageId, PackageMetadata>, DbError> {
        Ok(self.packages()?.into_iter().map(|m| (m.name.clone(), m)).collect())
    }

    /// Case-insensitive substring match on `category/name`.
    pub fn search(&self, key: &str) -> Result<Vec<SearchResult>, DbError> {
        let needle = key.to_lowercase();
        Ok(self
            .packages()?
            .into_iter()
            .filter(|m| m.name.to_string().to_lowercase().contains(&needle))
            .map(|m| SearchResult {
                versions: m.known_versions(),
                installed: m.installed_version(),
                package: m.name,
                description: m.description,
            })
            .collect())
    }

    /// Marks `package` installed and adds it to each dependency's `required_by`.
    /// Re-recording replaces the previous dependency edges.
    pub fn record_install(
        &self,
        package: &PackageId,
        version: &Version,
        explicit: bool,
        resolved_deps: &[PackageId],
        files: &[String],
    ) -> Result<(), DbError> {
        let _lock = self.lock()?;
        let mut meta = self.require(package)?;
        let rendered = version.to_string();
        if !meta.versions.contains_key(&rendered) {
            return Err(DbError::UnknownVersion { package: package.clone(), version: rendered });
        }
        let deps: BTreeSet<&PackageId> = resolved_deps.iter().filter(|d| *d != package).collect();
        for dep in &deps {
            if self.load(dep)?.is_none() {
                return Err(DbError::UnknownPackage((*dep).clone()));
            }
        }

        for mut other in self.packages()? {
            if other.name == *package {
                continue;
            }
            let had = other.required_by.contains(package);
            let wants = deps.contains(&other.name);
            if had != wants {
                if wants {
                    other.required_by.push(package.clone());
                } else {
                    other.required_by.retain(|p| p != package);
                }
                self.save(&other)?;
            }
        }

        meta.installed = Some(rendered);
        meta.explicit = explicit;
        meta.files = Some(files.to_vec());
        self.save(&meta)
    }

    pub fn record_removal(&self, package: &PackageId) -> Result<(), DbError> {
        let _lock = self.lock()?;
        let mut meta = self.require(package)?;
        if meta.installed.is_none() {
            return Err(DbError::NotInstalled(package.clone()));
        }
        for mut other in self.packages()? {
            if other.name != *package && other.required_by.contains(package) {
                other.required_by.retain(|p| p != package);
                self.save(&other)?;
            }
        }
        meta.installed = None;
        meta.explicit = false;
        meta.files = None;
        self.save(&meta)
    }

    pub fn archive_path(&self, key: &BuildKey) -> PathBuf {
        self.package_dir(key.package()).join(ARCHIVE_DIR).join(format!("{}.tar", key.canonical()))
    }

    pub fn archive_cache_get(&self, key: &BuildKey) -> Result<Option<Vec<u8>>, DbError> {
        match fs::read(self.archive_path(key)) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn archive_cache_put(&self, key: &BuildKey, bytes: &[u8]) -> Result<(), DbError> {
        write_atomic(&self.archive_path(key), bytes)?;
        Ok(())
    }

    /// Drops every cached archive of `package`.
    pub fn archive_cache_purge(&self, package: &PackageId) -> Result<(), DbError> {
        match fs::remove_dir_all(self.package_dir(package).join(ARCHIVE_DIR)) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    /// Full-tree scan of document and cross-document invariants.
    pub fn validate(&self) -> Result<Vec<String>, DbError> {
        let snapshot = self.snapshot()?;
        let mut problems: Vec<String> = snapshot.values().flat_map(PackageMetadata::violations).collect();
        for meta in snapshot.values() {
            for dependent in &meta.required_by {
                match snapshot.get(dependent) {
                    Some(d) if d.installed.is_some() => {}
                    _ => problems.push(format!("{}: required_by names {dependent}, which is not installed", meta.name)),
                }
            }
        }
        Ok(problems)
    }
}
