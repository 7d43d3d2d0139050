//! How the client reaches the farm and how it waits between polls.

use std::io;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::store::{DirStore, RemoteStore};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("unsupported url {0:?}")]
    UnsupportedUrl(String),
    #[error("farm unreachable: {0}")]
    Io(#[from] io::Error),
}

/// One request document out, one response document back.
pub trait Transport {
    fn exchange(&self, request: &str) -> Result<String, TransportError>;
}

/// Source of time for poll loops.
pub trait Timer {
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemTimer {
    origin: Instant,
}

impl Default for SystemTimer {
    fn default() -> Self {
        SystemTimer { origin: Instant::now() }
    }
}

impl Timer for SystemTimer {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

#[derive(Debug, Clone)]
pub struct UnixSocketTransport {
    pub path: PathBuf,
}

#[cfg(unix)]
impl Transport for UnixSocketTransport {
    fn exchange(&self, request: &str) -> Result<String, TransportError> {
        Ok(crate::farm::service::exchange(&self.path, request)?)
    }
}

/// `unix:///path/to.sock` or `unix:/path/to.sock`.
pub fn transport_for_url(url: &str) -> Result<UnixSocketTransport, TransportError> {
    let path = url
        .strip_prefix("unix://")
        .or_else(|| url.strip_prefix("unix:"))
        .filter(|p| p.starts_with('/'))
        .ok_or_else(|| TransportError::UnsupportedUrl(url.to_string()))?;
    Ok(UnixSocketTransport { path: PathBuf::from(path) })
}

/// `file:///dir` or a plain absolute path.
pub fn store_for_url(url: &str) -> Result<Box<dyn RemoteStore>, TransportError> {
    let path = url.strip_prefix("file://").unwrap_or(url);
    if !path.starts_with('/') {
        return Err(TransportError::UnsupportedUrl(url.to_string()));
    }
    Ok(Box::new(DirStore::new(path)))
}
