//! A restricted ebuild reader: variable assignments with `${VAR}` expansion.
//! Anything that would need a shell to evaluate is rejected.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::atom::{AtomError, PackageId};
use crate::db::{PackageMetadata, VersionEntry};
use crate::depexpr::{parse_dep_string, DepError};
use crate::version::Version;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EbuildError {
    #[error("line {line}: unsupported ebuild construct: {construct}")]
    UnsupportedEbuildConstruct { line: usize, construct: String },
    #[error("line {line}: unterminated quoted value")]
    UnterminatedQuote { line: usize },
    #[error("no ebuilds given")]
    EmptyInput,
    #[error("duplicate version {0}")]
    DuplicateVersion(String),
    #[error("version {version}: invalid RDEPEND: {source}")]
    BadDependencies { version: String, source: DepError },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EbuildInfo {
    pub description: String,
    pub depend_raw: String,
    pub rdepend_raw: String,
    pub variables: BTreeMap<String, String>,
}

fn is_var_name(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn unsupported(line: usize, construct: impl Into<String>) -> EbuildError {
    EbuildError::UnsupportedEbuildConstruct { line, construct: construct.into() }
}

fn expand(value: &str, vars: &BTreeMap<String, String>, line: usize) -> Result<String, EbuildError> {
    let mut out = String::with_capacity(value.len());
    let mut rest = value;
    while let Some(idx) = rest.find(['$', '`', '\\']) {
        out.push_str(&rest[..idx]);
        let tail = &rest[idx..];
        if tail.starts_with('`') {
            return Err(unsupported(line, "backtick command substitution"));
        }
        if let Some(escaped) = tail.strip_prefix('\\') {
            // Line continuations and escaped characters.
            match escaped.chars().next() {
                Some('\n') => rest = &escaped[1..],
                Some(c) => {
                    out.push(c);
                    rest = &escaped[c.len_utf8()..];
                }
                None => rest = escaped,
            }
            continue;
        }
        let after = &tail[1..];
        if after.starts_with('(') {
            return Err(unsupported(line, "$( ) command substitution"));
        }
        if let Some(braced) = after.strip_prefix('{') {
            let end = braced.find('}').ok_or_else(|| unsupported(line, "unterminated ${"))?;
            let name = &braced[..end];
            if !is_var_name(name) {
                return Err(unsupported(line, format!("parameter expansion ${{{name}}}")));
            }
            out.push_str(vars.get(name).map(String::as_str).unwrap_or(""));
            rest = &braced[end + 1..];
        } else {
            let len = after.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).unwrap_or(after.len());
            if len == 0 || !is_var_name(&after[..len]) {
                out.push('$');
                rest = after;
            } else {
                out.push_str(vars.get(&after[..len]).map(String::as_str).unwrap_or(""));
                rest = &after[len..];
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Reads `VAR="..."`, `VAR='...'` and `VAR=word` assignments, with
/// `${PN}`, `${PV}` and `${P}` predefined. `inherit` and `EAPI=` lines are
/// skipped; any other statement is rejected with its line number.
pub fn parse_ebuild(text: &str, pn: &str, pv: &str) -> Result<EbuildInfo, EbuildError> {
    let mut vars = BTreeMap::new();
    vars.insert("PN".to_string(), pn.to_string());
    vars.insert("PV".to_string(), pv.to_string());
    vars.insert("P".to_string(), format!("{pn}-{pv}"));
    let builtins = vars.clone();

    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let lineno = i + 1;
        let line = lines[i].trim();
        i += 1;

        if line.is_empty() || line.starts_with('#') || line.starts_with("EAPI=") {
            continue;
        }
        if line == "inherit" || line.starts_with("inherit ") {
            continue;
        }

        let Some(eq) = line.find('=') else {
            return Err(unsupported(lineno, line));
        };
        let (mut name, append) = match line[..eq].strip_suffix('+') {
            Some(n) => (n, true),
            None => (&line[..eq], false),
        };
        if let Some(n) = name.strip_prefix("export ") {
            name = n.trim();
        }
        if !is_var_name(name) {
            return Err(unsupported(lineno, line));
        }

        let raw = &line[eq + 1..];
        let value = match raw.chars().next() {
            Some(q @ ('"' | '\'')) => {
                // Collect until the matching closing quote, possibly over several lines.
                let mut buf = raw[1..].to_string();
                loop {
                    if let Some(end) = find_closing(&buf, q) {
                        let trailing = buf[end + 1..].trim();
                        if !trailing.is_empty() && !trailing.starts_with('#') {
                            return Err(unsupported(lineno, line));
                        }
                        buf.truncate(end);
                        break;
                    }
                    let Some(next) = lines.get(i) else {
                        return Err(EbuildError::UnterminatedQuote { line: lineno });
                    };
                    buf.push('\n');
                    buf.push_str(next);
                    i += 1;
                }
                if q == '\'' {
                    buf
                } else {
                    expand(&buf, &vars, lineno)?
                }
            }
            _ => {
                if raw.contains(char::is_whitespace) || raw.contains(['(', ')', ';', '&', '|', '<', '>']) {
                    return Err(unsupported(lineno, line));
                }
                expand(raw, &vars, lineno)?
            }
        };

        let value = if append {
            let prev = vars.get(name).cloned().unwrap_or_default();
            format!("{prev}{value}")
        } else {
            value
        };
        vars.insert(name.to_string(), value);
    }

    for (k, v) in builtins {
        if vars.get(&k) == Some(&v) {
            vars.remove(&k);
        }
    }

    Ok(EbuildInfo {
        description: vars.get("DESCRIPTION").cloned().unwrap_or_default(),
        depend_raw: vars.get("DEPEND").cloned().unwrap_or_default(),
        rdepend_raw: vars.get("RDEPEND").cloned().unwrap_or_default(),
        variables: vars,
    })
}

fn find_closing(buf: &str, quote: char) -> Option<usize> {
    let mut escaped = false;
    for (idx, c) in buf.char_indices() {
        if quote == '"' && c == '\\' && !escaped {
            escaped = true;
            continue;
        }
        if c == quote && !escaped {
            return Some(idx);
        }
        escaped = false;
    }
    None
}

/// Builds the metadata document for one package from its per-version ebuilds.
/// Only runtime dependencies are kept; the description comes from the highest version.
pub fn metadata_from_ebuilds(
    package: PackageId,
    entries: &[(Version, EbuildInfo)],
) -> Result<PackageMetadata, EbuildError> {
    let highest = entries.iter().max_by(|a, b| a.0.cmp(&b.0)).ok_or(EbuildError::EmptyInput)?;

    let mut versions = BTreeMap::new();
    for (version, info) in entries {
        let rendered = version.to_string();
        let expr = parse_dep_string(&info.rdepend_raw)
            .map_err(|source| EbuildError::BadDependencies { version: rendered.clone(), source })?;
        let entry = VersionEntry { dependencies: expr.top_level_strings() };
        if versions.insert(rendered.clone(), entry).is_some() {
            return Err(EbuildError::DuplicateVersion(rendered));
        }
    }

    Ok(PackageMetadata::new(package, highest.1.description.clone(), versions))
}

/// Splits an ebuild file stem such as `ncurses-6.1-r2` into name and version
/// at the first hyphen whose remainder is a valid version.
pub fn split_name_version(stem: &str) -> Option<(&str, Version)> {
    stem.match_indices('-').find_map(|(i, _)| {
        let (name, rest) = (&stem[..i], &stem[i + 1..]);
        (!name.is_empty()).then(|| Version::parse(rest).ok()).flatten().map(|v| (name, v))
    })
}

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Ebuild { path: PathBuf, source: EbuildError },
    #[error("{path}: {source}")]
    BadName { path: PathBuf, source: AtomError },
    #[error("{path}: file name is not <name>-<version>.ebuild for its directory")]
    BadFileName { path: PathBuf },
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, TreeError> {
    let io_err = |source| TreeError::Io { path: dir.to_path_buf(), source };
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        out.push(entry.map_err(io_err)?.path());
    }
    out.sort();
    Ok(out)
}

/// Reads a `<category>/<name>/<name>-<version>.ebuild` tree into package
/// metadata, one document per package directory that holds ebuilds.
pub fn read_ebuild_tree(root: &Path) -> Result<Vec<PackageMetadata>, TreeError> {
    let mut packages = Vec::new();
    for cat_dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        for pkg_dir in sorted_entries(&cat_dir)?.into_iter().filter(|p| p.is_dir()) {
            let category = cat_dir.file_name().unwrap_or_default().to_string_lossy();
            let name = pkg_dir.file_name().unwrap_or_default().to_string_lossy();
            let id = PackageId::new(&category, &name)
                .map_err(|source| TreeError::BadName { path: pkg_dir.clone(), source })?;
            let mut entries = Vec::new();
            for file in sorted_entries(&pkg_dir)? {
                if file.extension().is_none_or(|e| e != "ebuild") {
                    continue;
                }
                let stem = file.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                let version = match split_name_version(&stem) {
                    Some((n, v)) if n == name => v,
                    _ => return Err(TreeError::BadFileName { path: file }),
                };
                let text = fs::read_to_string(&file).map_err(|source| TreeError::Io { path: file.clone(), source })?;
                let info = parse_ebuild(&text, &name, &version.to_string())
                    .map_err(|source| TreeError::Ebuild { path: file.clone(), source })?;
                entries.push((version, info));
            }
            if !entries.is_empty() {
                let meta = metadata_from_ebuilds(id, &entries)
                    .map_err(|source| TreeError::Ebuild { path: pkg_dir.clone(), source })?;
                packages.push(meta);
            }
        }
    }
    Ok(packages)
}
