//! Read access to the remote package store (manifest, category documents,
//! built archives) and helpers to publish a catalog into one.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atom::BuildKey;
use crate::db::{PackageMetadata, VersionEntry};

pub const MANIFEST_PATH: &str = "manifest.txt";
pub const ARTIFACT_URL_SCHEME: &str = "store://";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store unreachable: {0}")]
    Unreachable(String),
    #[error("not found in store: {0}")]
    NotFound(String),
}

pub trait RemoteStore {
    fn fetch(&self, path: &str) -> Result<Vec<u8>, StoreError>;
}

impl<T: RemoteStore + ?Sized> RemoteStore for &T {
    fn fetch(&self, path: &str) -> Result<Vec<u8>, StoreError> {
        (**self).fetch(path)
    }
}

pub fn category_path(category: &str) -> String {
    format!("{category}.json")
}

pub fn artifact_path(key: &BuildKey) -> String {
    format!("artifacts/{}.tar", key.canonical())
}

pub fn artifact_url(key: &BuildKey) -> String {
    format!("{ARTIFACT_URL_SCHEME}{}", key.canonical())
}

/// Maps `store://<key>` to the store-relative path of the archive.
pub fn artifact_path_for_url(url: &str) -> Option<String> {
    let key = BuildKey::parse(url.strip_prefix(ARTIFACT_URL_SCHEME)?).ok()?;
    Some(artifact_path(&key))
}

/// A package entry as published in a category document: no local install state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemotePackage {
    pub name: crate::atom::PackageId,
    pub description: String,
    pub versions: BTreeMap<String, VersionEntry>,
}

impl From<&PackageMetadata> for RemotePackage {
    fn from(m: &PackageMetadata) -> Self {
        RemotePackage { name: m.name.clone(), description: m.description.clone(), versions: m.versions.clone() }
    }
}

/// Package name → entry, one document per category.
pub type CategoryDocument = BTreeMap<String, RemotePackage>;

/// Renders the manifest and one document per category.
pub fn catalog_documents(packages: &[PackageMetadata]) -> Vec<(String, Vec<u8>)> {
    let mut categories: BTreeMap<String, CategoryDocument> = BTreeMap::new();
    for p in packages {
        categories
            .entry(p.name.category().to_string())
            .or_default()
            .insert(p.name.name().to_string(), RemotePackage::from(p));
    }
    let mut docs = Vec::with_capacity(categories.len() + 1);
    let manifest: String = categories.keys().map(|c| format!("{c}\n")).collect();
    docs.push((MANIFEST_PATH.to_string(), manifest.into_bytes()));
    for (category, doc) in categories {
        let mut bytes = serde_json::to_vec_pretty(&doc).expect("category document serializes");
        bytes.push(b'\n');
        docs.push((category_path(&category), bytes));
    }
    docs
}

/// A store backed by a local directory (`file://` URLs or plain paths).
#[derive(Debug, Clone)]
pub struct DirStore {
    root: PathBuf,
}

impl DirStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn publish(&self, packages: &[PackageMetadata]) -> io::Result<()> {
        for (path, bytes) in catalog_documents(packages) {
            let dest = self.root.join(path);
            if let Some(parent) = dest.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(dest, bytes)?;
        }
        Ok(())
    }
}

impl RemoteStore for DirStore {
    fn fetch(&self, path: &str) -> Result<Vec<u8>, StoreError> {
        if !self.root.is_dir() {
            return Err(StoreError::Unreachable(self.root.display().to_string()));
        }
        if path.split('/').any(|c| c == "..") {
            return Err(StoreError::NotFound(path.to_string()));
        }
        match fs::read(self.root.join(path)) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::NotFound(path.to_string())),
            Err(e) => Err(StoreError::Unreachable(e.to_string())),
        }
    }
}

/// In-memory store, for tests and the in-process farm.
#[derive(Debug, Default)]
pub struct MemoryStore {
    files: Mutex<HashMap<String, Vec<u8>>>,
    unreachable: Mutex<bool>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_catalog(packages: &[PackageMetadata]) -> Self {
        let store = Self::new();
        store.publish(packages);
        store
    }

    pub fn put(&self, path: &str, bytes: Vec<u8>) {
        self.files.lock().unwrap().insert(path.to_string(), bytes);
    }

    pub fn publish(&self, packages: &[PackageMetadata]) {
        for (path, bytes) in catalog_documents(packages) {
            self.put(&path, bytes);
        }
    }

    pub fn set_unreachable(&self, unreachable: bool) {
        *self.unreachable.lock().unwrap() = unreachable;
    }
}

impl RemoteStore for MemoryStore {
    fn fetch(&self, path: &str) -> Result<Vec<u8>, StoreError> {
        if *self.unreachable.lock().unwrap() {
            return Err(StoreError::Unreachable("memory store offline".into()));
        }
        self.files.lock().unwrap().get(path).cloned().ok_or_else(|| StoreError::NotFound(path.to_string()))
    }
}
