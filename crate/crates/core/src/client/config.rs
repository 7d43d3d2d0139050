//! INI configuration with sections `[local]`, `[server]`, `[user]` and
//! `[client]`. The file is only ever read.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

use crate::atom::UseFlagSet;

pub const DEFAULT_CONFIG_PATH: &str = "/etc/pacloud/pacloud.conf";
pub const CONFIG_ENV: &str = "PACLOUD_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    MalformedConfigLine { line: usize, message: String },
    #[error("config line {line}: invalid value for {key}: {message}")]
    InvalidValue { line: usize, key: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("server.{0} is not set")]
    MissingServerUrl(&'static str),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub db_path: PathBuf,
    pub log_path: PathBuf,
    pub install_root: PathBuf,
    pub api_url: Option<String>,
    pub store_url: Option<String>,
    pub use_flags: UseFlagSet,
    pub arch: String,
    pub cflags: String,
    pub poll_interval: Duration,
    pub timeout: Duration,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            db_path: PathBuf::from("/var/lib/pacloud/db/"),
            log_path: PathBuf::from("/var/lib/pacloud/pacloud.log"),
            install_root: PathBuf::from("/"),
            api_url: None,
            store_url: None,
            use_flags: UseFlagSet::new(),
            arch: String::new(),
            cflags: String::new(),
            poll_interval: Duration::from_secs(10),
            timeout: Duration::from_secs(7200),
        }
    }
}

impl Config {
    pub fn api_url(&self) -> Result<&str, ConfigError> {
        self.api_url.as_deref().ok_or(ConfigError::MissingServerUrl("api_url"))
    }

    pub fn store_url(&self) -> Result<&str, ConfigError> {
        self.store_url.as_deref().ok_or(ConfigError::MissingServerUrl("store_url"))
    }

    fn check(&self) -> Result<(), ConfigError> {
        if self.poll_interval.is_zero() {
            return Err(ConfigError::Invalid("client.poll_interval must be positive".into()));
        }
        if self.timeout < self.poll_interval {
            return Err(ConfigError::Invalid("client.timeout must be at least client.poll_interval".into()));
        }
        for (name, p) in [("local.db_path", &self.db_path), ("local.install_root", &self.install_root)] {
            if !p.is_absolute() {
                return Err(ConfigError::Invalid(format!("{name} must be absolute, got {}", p.display())));
            }
        }
        Ok(())
    }
}

fn unquote(v: &str) -> &str {
    for q in ['"', '\''] {
        if let Some(inner) = v.strip_prefix(q).and_then(|s| s.strip_suffix(q)) {
            return inner;
        }
    }
    v
}

fn seconds(line: usize, key: &str, v: &str) -> Result<Duration, ConfigError> {
    v.parse::<u64>().map(Duration::from_secs).map_err(|e| ConfigError::InvalidValue {
        line,
        key: key.to_string(),
        message: e.to_string(),
    })
}

/// Parses configuration text. Unknown sections and keys are reported in the
/// returned warnings and otherwise ignored.
pub fn parse_config(text: &str) -> Result<(Config, Vec<String>), ConfigError> {
    let mut config = Config::default();
    let mut warnings = Vec::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::MalformedConfigLine {
                line: line_no,
                message: format!("unterminated section header {line:?}"),
            })?;
            let name = name.trim().to_string();
            if !matches!(name.as_str(), "local" | "server" | "user" | "client") {
                warnings.push(format!("line {line_no}: unknown section [{name}]"));
            }
            section = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::MalformedConfigLine { line: line_no, message: format!("expected key = value, got {line:?}") });
        };
        let key = key.trim();
        let value = unquote(value.trim());
        let Some(sec) = section.as_deref() else {
            return Err(ConfigError::MalformedConfigLine { line: line_no, message: format!("{key} outside any section") });
        };
        match (sec, key) {
            ("local", "db_path") => config.db_path = PathBuf::from(value),
            ("local", "log_path") => config.log_path = PathBuf::from(value),
            ("local", "install_root") => config.install_root = PathBuf::from(value),
            ("server", "api_url") => config.api_url = Some(value.to_string()),
            ("server", "store_url") => config.store_url = Some(value.to_string()),
            ("user", "use_flags") => {
                config.use_flags = UseFlagSet::parse_list(value).map_err(|e| ConfigError::InvalidValue {
                    line: line_no,
                    key: key.to_string(),
                    message: e.to_string(),
                })?
            }
            ("user", "arch") => config.arch = value.to_string(),
            ("user", "cflags") => config.cflags = value.to_string(),
            ("client", "poll_interval") => config.poll_interval = seconds(line_no, key, value)?,
            ("client", "timeout") => config.timeout = seconds(line_no, key, value)?,
            _ => warnings.push(format!("line {line_no}: unknown key {sec}.{key}")),
        }
    }
    config.check()?;
    Ok((config, warnings))
}

/// The config path in effect: explicit flag, then `PACLOUD_CONFIG`, then the default.
pub fn config_path(flag: Option<&Path>, env: Option<&str>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CONFIG_PATH))
}

/// Loads `path`; a missing file yields the defaults. Warnings are logged.
pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
        Err(source) => return Err(ConfigError::Io { path: path.to_path_buf(), source }),
    };
    let (config, warnings) = parse_config(&text)?;
    for w in warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let (c, w) = parse_config("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.db_path, PathBuf::from("/var/lib/pacloud/db/"));
        assert_eq!(c.poll_interval, Duration::from_secs(10));
        assert_eq!(c.timeout, Duration::from_secs(7200));
        assert!(w.is_empty());
    }

    #[test]
    fn full_file() {
        let text = "# pacloud\n[local]\ndb_path = /tmp/db\ninstall_root=/tmp/root\n\n[server]\napi_url = unix:///run/pacloud.sock\nstore_url = /srv/store\n[user]\nuse_flags = \"mousewheel unicode\"\narch = amd64\ncflags = -O2 -pipe\n[client]\npoll_interval = 5\ntimeout = 60\n";
        let (c, w) = parse_config(text).unwrap();
        assert!(w.is_empty());
        assert_eq!(c.db_path, PathBuf::from("/tmp/db"));
        assert_eq!(c.install_root, PathBuf::from("/tmp/root"));
        assert_eq!(c.api_url().unwrap(), "unix:///run/pacloud.sock");
        assert_eq!(c.use_flags, UseFlagSet::from_flags(["mousewheel", "unicode"]).unwrap());
        assert_eq!(c.cflags, "-O2 -pipe");
        assert_eq!(c.poll_interval, Duration::from_secs(5));
        assert_eq!(c.timeout, Duration::from_secs(60));
    }

    #[test]
    fn malformed_line_reports_number() {
        let err = parse_config("[local]\ndb_path = /x\nkey_without_equals\n").unwrap_err();
        assert!(matches!(err, ConfigError::MalformedConfigLine { line: 3, .. }), "{err}");
    }

    #[test]
    fn unknown_keys_warn() {
        let (_, w) = parse_config("[local]\ncolour = blue\n[extra]\nx = 1\n").unwrap();
        assert_eq!(w.len(), 3);
    }

    #[test]
    fn server_url_is_required_lazily() {
        let (c, _) = parse_config("[local]\n").unwrap();
        assert!(matches!(c.api_url(), Err(ConfigError::MissingServerUrl("api_url"))));
    }

    #[test]
    fn invariants_enforced() {
        assert!(parse_config("[client]\npoll_interval = 0\n").is_err());
        assert!(parse_config("[client]\npoll_interval = 20\ntimeout = 10\n").is_err());
        assert!(parse_config("[local]\ndb_path = relative/db\n").is_err());
        assert!(parse_config("[client]\ntimeout = soon\n").is_err());
    }

    #[test]
    fn path_precedence() {
        let flag = Path::new("/a.conf");
        assert_eq!(config_path(Some(flag), Some("/b.conf")), PathBuf::from("/a.conf"));
        assert_eq!(config_path(None, Some("/b.conf")), PathBuf::from("/b.conf"));
        assert_eq!(config_path(None, None), PathBuf::from(DEFAULT_CONFIG_PATH));
    }

    #[test]
    fn missing_file_is_defaults() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(load_config(&dir.path().join("nope.conf")).unwrap(), Config::default());
    }
}
