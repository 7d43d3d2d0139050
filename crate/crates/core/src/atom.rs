//! Package identifiers, USE-flag sets, dependency atoms and build keys.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::version::{compare_versions, MalformedVersion, Version};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AtomError {
    #[error("malformed package id {0:?}")]
    MalformedPackageId(String),
    #[error("malformed USE flag {0:?}")]
    MalformedFlag(String),
    #[error("malformed atom {text:?}: {reason}")]
    MalformedAtom { text: String, reason: String },
    #[error("malformed build key {0:?}")]
    MalformedBuildKey(String),
    #[error(transparent)]
    Version(#[from] MalformedVersion),
}

/// `category/name`, as laid out in the package repository tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PackageId {
    category: String,
    name: String,
}

fn is_category_char(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || matches!(c, '+' | '_' | '.' | '-')
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '+' | '_' | '.' | '-')
}

impl PackageId {
    pub fn new(category: &str, name: &str) -> Result<Self, AtomError> {
        if category.is_empty()
            || name.is_empty()
            || !category.chars().all(is_category_char)
            || !name.chars().all(is_name_char)
        {
            return Err(AtomError::MalformedPackageId(format!("{category}/{name}")));
        }
        Ok(PackageId { category: category.to_string(), name: name.to_string() })
    }

    pub fn parse(text: &str) -> Result<Self, AtomError> {
        let (category, name) =
            text.split_once('/').ok_or_else(|| AtomError::MalformedPackageId(text.to_string()))?;
        PackageId::new(category, name)
    }

    pub fn category(&self) -> &str {
        &self.category
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Display for PackageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.category, self.name)
    }
}

impl FromStr for PackageId {
    type Err = AtomError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PackageId::parse(s)
    }
}

impl Serialize for PackageId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PackageId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        PackageId::parse(&s).map_err(serde::de::Error::custom)
    }
}

pub fn is_valid_flag(flag: &str) -> bool {
    !flag.is_empty() && flag.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '@' | '-'))
}

/// A set of enabled USE flags; iteration and rendering are always sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct UseFlagSet(BTreeSet<String>);

impl UseFlagSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_flags<I, S>(flags: I) -> Result<Self, AtomError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for flag in flags {
            let flag = flag.as_ref();
            if !is_valid_flag(flag) {
                return Err(AtomError::MalformedFlag(flag.to_string()));
            }
            set.insert(flag.to_string());
        }
        Ok(UseFlagSet(set))
    }

    /// Whitespace- or comma-separated list, as found in config files.
    pub fn parse_list(text: &str) -> Result<Self, AtomError> {
        Self::from_flags(text.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()))
    }

    pub fn contains(&self, flag: &str) -> bool {
        self.0.contains(flag)
    }

    pub fn insert(&mut self, flag: &str) -> Result<bool, AtomError> {
        if !is_valid_flag(flag) {
            return Err(AtomError::MalformedFlag(flag.to_string()));
        }
        Ok(self.0.insert(flag.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Comma-joined, sorted.
    pub fn canonical(&self) -> String {
        self.iter().collect::<Vec<_>>().join(",")
    }
}

impl<'de> Deserialize<'de> for UseFlagSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let flags = Vec::<String>::deserialize(d)?;
        UseFlagSet::from_flags(flags).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Specifier {
    Any,
    GreaterEqual,
    Greater,
    Tilde,
    Equal,
    LessEqual,
    Less,
}

impl Specifier {
    pub fn as_str(self) -> &'static str {
        match self {
            Specifier::Any => "",
            Specifier::GreaterEqual => ">=",
            Specifier::Greater => ">",
            Specifier::Tilde => "~",
            Specifier::Equal => "=",
            Specifier::LessEqual => "<=",
            Specifier::Less => "<",
        }
    }

    fn split_prefix(text: &str) -> (Specifier, &str) {
        // Two-character operators first.
        for (prefix, spec) in [
            (">=", Specifier::GreaterEqual),
            ("<=", Specifier::LessEqual),
            (">", Specifier::Greater),
            ("<", Specifier::Less),
            ("~", Specifier::Tilde),
            ("=", Specifier::Equal),
        ] {
            if let Some(rest) = text.strip_prefix(prefix) {
                return (spec, rest);
            }
        }
        (Specifier::Any, text)
    }
}

/// One dependency such as `>=sys-libs/ncurses-6.0` or `x11-libs/gtk+`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DependencyAtom {
    specifier: Specifier,
    package: PackageId,
    version: Option<Version>,
}

impl DependencyAtom {
    pub fn any(package: PackageId) -> Self {
        DependencyAtom { specifier: Specifier::Any, package, version: None }
    }

    pub fn versioned(specifier: Specifier, package: PackageId, version: Version) -> Option<Self> {
        (specifier != Specifier::Any).then_some(DependencyAtom { specifier, package, version: Some(version) })
    }

    pub fn parse(text: &str) -> Result<Self, AtomError> {
        let malformed = |reason: &str| AtomError::MalformedAtom { text: text.to_string(), reason: reason.to_string() };
        let (specifier, rest) = Specifier::split_prefix(text);
        let (category, tail) = rest.split_once('/').ok_or_else(|| malformed("missing category"))?;

        if specifier == Specifier::Any {
            let package = PackageId::new(category, tail).map_err(|_| malformed("invalid package name"))?;
            return Ok(DependencyAtom::any(package));
        }

        // The version begins after the first hyphen whose remainder parses as
        // a version: `foo-bar-1.0-r1` splits into `foo-bar` and `1.0-r1`.
        let mut last_err = None;
        for (idx, _) in tail.match_indices('-') {
            let candidate = &tail[idx + 1..];
            if !candidate.starts_with(|c: char| c.is_ascii_digit()) {
                continue;
            }
            match Version::parse(candidate) {
                Ok(version) => {
                    let package = PackageId::new(category, &tail[..idx]).map_err(|_| malformed("invalid package name"))?;
                    return Ok(DependencyAtom { specifier, package, version: Some(version) });
                }
                Err(e) => last_err = Some(e),
            }
        }
        match last_err {
            Some(e) => Err(AtomError::Version(e)),
            None => Err(malformed("operator requires a version")),
        }
    }

    pub fn specifier(&self) -> Specifier {
        self.specifier
    }

    pub fn package(&self) -> &PackageId {
        &self.package
    }

    pub fn version(&self) -> Option<&Version> {
        self.version.as_ref()
    }

    pub fn matches(&self, candidate: &Version) -> bool {
        atom_matches(self, candidate)
    }
}

impl fmt::Display for DependencyAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.version {
            Some(v) => write!(f, "{}{}-{}", self.specifier.as_str(), self.package, v),
            None => write!(f, "{}", self.package),
        }
    }
}

impl FromStr for DependencyAtom {
    type Err = AtomError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DependencyAtom::parse(s)
    }
}

pub fn atom_matches(atom: &DependencyAtom, candidate: &Version) -> bool {
    use std::cmp::Ordering::*;
    let Some(wanted) = &atom.version else {
        return true;
    };
    let ord = compare_versions(candidate, wanted);
    match atom.specifier {
        Specifier::Any => true,
        Specifier::GreaterEqual => ord != Less,
        Specifier::Greater => ord == Greater,
        Specifier::Equal => ord == Equal,
        Specifier::LessEqual => ord != Greater,
        Specifier::Less => ord == Less,
        Specifier::Tilde => candidate.same_base(wanted),
    }
}

/// Highest version in `available` that satisfies `atom`.
pub fn select_best_version<'a, I>(atom: &DependencyAtom, available: I) -> Option<&'a Version>
where
    I: IntoIterator<Item = &'a Version>,
{
    available.into_iter().filter(|v| atom_matches(atom, v)).max()
}

/// The unit of binary uniqueness: one package version built with one flag set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BuildKey {
    package: PackageId,
    version: Version,
    useflags: UseFlagSet,
}

pub fn canonical_build_key(package: PackageId, version: Version, flags: UseFlagSet) -> BuildKey {
    BuildKey { package, version, useflags: flags }
}

impl BuildKey {
    pub fn new(package: PackageId, version: Version, useflags: UseFlagSet) -> Self {
        canonical_build_key(package, version, useflags)
    }

    pub fn parse(text: &str) -> Result<Self, AtomError> {
        let bad = || AtomError::MalformedBuildKey(text.to_string());
        let body = text.strip_suffix(']').ok_or_else(bad)?;
        let (pv, flags) = body.rsplit_once('[').ok_or_else(bad)?;
        let atom = DependencyAtom::parse(&format!("={pv}")).map_err(|_| bad())?;
        let useflags = UseFlagSet::from_flags(flags.split(',').filter(|f| !f.is_empty())).map_err(|_| bad())?;
        let version = atom.version.ok_or_else(bad)?;
        Ok(BuildKey { package: atom.package, version, useflags })
    }

    pub fn package(&self) -> &PackageId {
        &self.package
    }

    pub fn version(&self) -> &Version {
        &self.version
    }

    pub fn useflags(&self) -> &UseFlagSet {
        &self.useflags
    }

    /// `category/name-version[f1,f2]`.
    pub fn canonical(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for BuildKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}[{}]", self.package, self.version, self.useflags.canonical())
    }
}

impl FromStr for BuildKey {
    type Err = AtomError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BuildKey::parse(s)
    }
}

impl Serialize for BuildKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BuildKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        BuildKey::parse(&s).map_err(serde::de::Error::custom)
    }
}
