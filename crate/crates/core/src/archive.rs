//! Binary package archives: tar files whose entries are paths relative to the
//! install root. Builders emit entries in sorted order with zeroed metadata so
//! equal inputs give byte-identical archives.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read};
use std::path::{Component, Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("unsafe archive path {0:?}")]
    UnsafePath(String),
    #[error("unsupported archive entry {path:?} of type {kind}")]
    UnsupportedEntry { path: String, kind: String },
    #[error("{path} already exists and is not a regular file")]
    Conflict { path: String },
    #[error("archive i/o: {0}")]
    Io(#[from] io::Error),
}

/// Relative path of `raw` if it stays inside the root.
fn safe_relative(raw: &str) -> Result<PathBuf, ArchiveError> {
    let mut out = PathBuf::new();
    for c in Path::new(raw).components() {
        match c {
            Component::Normal(p) => out.push(p),
            Component::CurDir => {}
            _ => return Err(ArchiveError::UnsafePath(raw.to_string())),
        }
    }
    if out.as_os_str().is_empty() {
        return Err(ArchiveError::UnsafePath(raw.to_string()));
    }
    Ok(out)
}

fn render(path: &Path) -> String {
    path.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect::<Vec<_>>().join("/")
}

/// Builds a tar of regular files. Paths must be relative and free of `..`.
pub fn build_archive(files: &BTreeMap<String, Vec<u8>>) -> Result<Vec<u8>, ArchiveError> {
    let mut builder = tar::Builder::new(Vec::new());
    for (path, contents) in files {
        let rel = safe_relative(path)?;
        let mut header = tar::Header::new_gnu();
        header.set_size(contents.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        header.set_uid(0);
        header.set_gid(0);
        header.set_entry_type(tar::EntryType::Regular);
        builder.append_data(&mut header, &rel, contents.as_slice())?;
    }
    Ok(builder.into_inner()?)
}

/// Regular-file entries of an archive keyed by normalized relative path.
/// Directory entries are accepted and skipped; anything else is rejected.
pub fn read_archive(bytes: &[u8]) -> Result<BTreeMap<String, Vec<u8>>, ArchiveError> {
    let mut archive = tar::Archive::new(bytes);
    let mut out = BTreeMap::new();
    for entry in archive.entries()? {
        let mut entry = entry?;
        let raw = entry.path()?.to_string_lossy().into_owned();
        let rel = safe_relative(&raw)?;
        match entry.header().entry_type() {
            tar::EntryType::Regular | tar::EntryType::Continuous => {
                let mut buf = Vec::new();
                entry.read_to_end(&mut buf)?;
                out.insert(render(&rel), buf);
            }
            tar::EntryType::Directory => {}
            other => return Err(ArchiveError::UnsupportedEntry { path: raw, kind: format!("{other:?}") }),
        }
    }
    Ok(out)
}

/// Writes every file of the archive under `root`, creating parent
/// directories. Returns the relative paths written, sorted.
pub fn unpack_archive(bytes: &[u8], root: &Path) -> Result<Vec<String>, ArchiveError> {
    let files = read_archive(bytes)?;
    for path in files.keys() {
        let target = root.join(path);
        if target.exists() && !target.is_file() {
            return Err(ArchiveError::Conflict { path: path.clone() });
        }
    }
    for (path, contents) in &files {
        let target = root.join(path);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&target, contents)?;
    }
    Ok(files.into_keys().collect())
}

/// Deletes the listed files under `root` and then any parent directories
/// left empty, never removing `root` itself. Missing files are ignored.
pub fn remove_files(root: &Path, files: &[String]) -> Result<(), ArchiveError> {
    let mut parents = Vec::new();
    for f in files {
        let rel = safe_relative(f)?;
        match fs::remove_file(root.join(&rel)) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        let mut p = rel.parent();
        while let Some(dir) = p.filter(|d| !d.as_os_str().is_empty()) {
            parents.push(dir.to_path_buf());
            p = dir.parent();
        }
    }
    // Deepest first so children are pruned before their parents.
    parents.sort_by_key(|p| std::cmp::Reverse(p.components().count()));
    parents.dedup();
    for dir in parents {
        let full = root.join(dir);
        if fs::read_dir(&full).map(|mut d| d.next().is_none()).unwrap_or(false) {
            fs::remove_dir(&full)?;
        }
    }
    Ok(())
}

/// Every regular file under `root` keyed by relative path, for comparing
/// directory trees. A missing root is empty.
pub fn snapshot_tree(root: &Path) -> io::Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    if !root.exists() {
        return Ok(out);
    }
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).expect("walk stays under root");
                out.insert(render(rel), fs::read(&path)?);
            }
        }
    }
    Ok(out)
}
