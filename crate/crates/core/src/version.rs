//! Package versions: dot-separated integers, an optional trailing letter and
//! an optional `-rN` revision.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed version {text:?}: {reason}")]
pub struct MalformedVersion {
    pub text: String,
    pub reason: &'static str,
}

/// A parsed version such as `6.1-r2` or `1.2.3a`.
///
/// Revision `0` means the version carries no `-rN` suffix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Version {
    components: Vec<u64>,
    letter: Option<char>,
    revision: u64,
}

impl Version {
    pub fn new(components: Vec<u64>, letter: Option<char>, revision: u64) -> Option<Self> {
        if components.is_empty() || letter.is_some_and(|c| !c.is_ascii_lowercase()) {
            return None;
        }
        Some(Version { components, letter, revision })
    }

    pub fn parse(text: &str) -> Result<Self, MalformedVersion> {
        let err = |reason| MalformedVersion { text: text.to_string(), reason };
        if text.is_empty() {
            return Err(err("empty"));
        }

        let (base, revision) = match text.find('-') {
            Some(idx) => {
                let suffix = &text[idx + 1..];
                let digits = suffix.strip_prefix('r').ok_or_else(|| err("bad revision suffix"))?;
                if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(err("bad revision suffix"));
                }
                let rev = digits.parse::<u64>().map_err(|_| err("revision out of range"))?;
                (&text[..idx], rev)
            }
            None => (text, 0),
        };

        if !base.starts_with(|c: char| c.is_ascii_digit()) {
            return Err(err("must start with a digit"));
        }

        let (numeric, letter) = match base.chars().last() {
            Some(c) if c.is_ascii_lowercase() => (&base[..base.len() - 1], Some(c)),
            _ => (base, None),
        };

        let mut components = Vec::new();
        for part in numeric.split('.') {
            if part.is_empty() {
                return Err(err("empty numeric component"));
            }
            if !part.bytes().all(|b| b.is_ascii_digit()) {
                return Err(if part.bytes().any(|b| b.is_ascii_alphabetic()) {
                    err("letter must be a single trailing lowercase character")
                } else {
                    err("unexpected character")
                });
            }
            components.push(part.parse::<u64>().map_err(|_| err("component out of range"))?);
        }

        Ok(Version { components, letter, revision })
    }

    pub fn components(&self) -> &[u64] {
        &self.components
    }

    pub fn letter(&self) -> Option<char> {
        self.letter
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Same components and letter, ignoring the revision.
    pub fn same_base(&self, other: &Version) -> bool {
        self.compare_base(other) == Ordering::Equal
    }

    fn compare_base(&self, other: &Version) -> Ordering {
        let len = self.components.len().max(other.components.len());
        for i in 0..len {
            // A missing component sorts below any present one, so 1.2 < 1.2.0.
            match (self.components.get(i), other.components.get(i)) {
                (Some(a), Some(b)) => match a.cmp(b) {
                    Ordering::Equal => continue,
                    ord => return ord,
                },
                (None, Some(_)) => return Ordering::Less,
                (Some(_), None) => return Ordering::Greater,
                (None, None) => unreachable!(),
            }
        }
        self.letter.cmp(&other.letter)
    }
}

/// Components numerically, then letter (absent first), then revision.
pub fn compare_versions(a: &Version, b: &Version) -> Ordering {
    a.compare_base(b).then(a.revision.cmp(&b.revision))
}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        compare_versions(self, other)
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{c}")?;
        }
        if let Some(l) = self.letter {
            write!(f, "{l}")?;
        }
        if self.revision > 0 {
            write!(f, "-r{}", self.revision)?;
        }
        Ok(())
    }
}

impl FromStr for Version {
    type Err = MalformedVersion;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Version::parse(s)
    }
}

impl Serialize for Version {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Version {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Version::parse(&s).map_err(serde::de::Error::custom)
    }
}
