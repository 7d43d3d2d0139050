use std::collections::BTreeSet;
use std::fmt;

use super::{DbError, LocalDb, PackageMetadata};
use crate::store::{category_path, CategoryDocument, RemoteStore, StoreError, MANIFEST_PATH};

/// The store's root index: one category per line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub categories: Vec<String>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, DbError> {
        let mut seen = BTreeSet::new();
        let mut categories = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                return Err(DbError::MalformedManifest(format!("line {}: empty", i + 1)));
            }
            if !line.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || matches!(c, '+' | '_' | '.' | '-')) {
                return Err(DbError::MalformedManifest(format!("line {}: invalid category {line:?}", i + 1)));
            }
            if !seen.insert(line.to_string()) {
                return Err(DbError::MalformedManifest(format!("line {}: duplicate category {line:?}", i + 1)));
            }
            categories.push(line.to_string());
        }
        Ok(Manifest { categories })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SyncReport {
    pub categories: usize,
    pub added: usize,
    pub updated: usize,
    pub unchanged: usize,
    /// Categories whose document could not be decoded, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl fmt::Display for SyncReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} categories: {} added, {} updated, {} unchanged",
            self.categories, self.added, self.updated, self.unchanged
        )?;
        for (category, reason) in &self.skipped {
            write!(f, "\nskipped {category}: {reason}")?;
        }
        Ok(())
    }
}

fn unreachable(e: StoreError) -> DbError {
    DbError::StoreUnreachable(e.to_string())
}

impl LocalDb {
    /// Downloads the manifest and every category document, then merges them
    /// into the tree. Remote data wins for description and versions; local
    /// install state is kept. Nothing is written unless every fetch succeeds.
    pub fn sync_from_store(&self, store: &dyn RemoteStore) -> Result<SyncReport, DbError> {
        let manifest_bytes = store.fetch(MANIFEST_PATH).map_err(unreachable)?;
        let manifest_text =
            String::from_utf8(manifest_bytes).map_err(|_| DbError::MalformedManifest("not UTF-8".into()))?;
        let manifest = Manifest::parse(&manifest_text)?;

        let mut report = SyncReport { categories: manifest.categories.len(), ..Default::default() };
        let mut documents = Vec::new();
        for category in &manifest.categories {
            let bytes = store.fetch(&category_path(category)).map_err(unreachable)?;
            match decode_category(category, &bytes) {
                Ok(doc) => documents.push(doc),
                Err(reason) => report.skipped.push((category.clone(), reason)),
            }
        }

        let _lock = self.lock()?;
        for doc in documents {
            for remote in doc.into_values() {
                let merged = match self.load(&remote.name)? {
                    Some(local) => {
                        let mut versions = remote.versions;
                        // Keep the entry for an installed version the store no longer lists.
                        if let Some(v) = &local.installed {
                            if let Some(entry) = local.versions.get(v) {
                                versions.entry(v.clone()).or_insert_with(|| entry.clone());
                            }
                        }
                        let merged = PackageMetadata { description: remote.description, versions, ..local.clone() };
                        if merged == local {
                            report.unchanged += 1;
                            continue;
                        }
                        report.updated += 1;
                        merged
                    }
                    None => {
                        report.added += 1;
                        PackageMetadata::new(remote.name, remote.description, remote.versions)
                    }
                };
                self.save(&merged)?;
            }
        }
        Ok(report)
    }
}

fn decode_category(category: &str, bytes: &[u8]) -> Result<CategoryDocument, String> {
    let doc: CategoryDocument = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
    for (name, pkg) in &doc {
        if pkg.name.category() != category || pkg.name.name() != name {
            return Err(format!("entry {name:?} names {}", pkg.name));
        }
    }
    Ok(doc)
}
