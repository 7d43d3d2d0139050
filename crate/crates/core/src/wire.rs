//! JSON documents exchanged between client and farm, one request per exchange.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atom::{BuildKey, PackageId, UseFlagSet};
use crate::version::Version;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("undecodable document: {0}")]
    Undecodable(String),
    #[error("unknown status {0:?}")]
    UnknownStatus(String),
    #[error("\"available\" response without a url")]
    MissingUrl,
    #[error("\"failed\" response without an error")]
    MissingError,
    #[error("bad request field: {0}")]
    BadRequest(String),
}

/// Field order is part of the protocol: package, version, useflags (sorted).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRequest {
    pub package: String,
    pub version: String,
    pub useflags: Vec<String>,
}

impl WireRequest {
    pub fn from_key(key: &BuildKey) -> Self {
        WireRequest {
            package: key.package().to_string(),
            version: key.version().to_string(),
            useflags: key.useflags().iter().map(str::to_string).collect(),
        }
    }

    pub fn to_key(&self) -> Result<BuildKey, ProtocolError> {
        let bad = |e: &dyn std::fmt::Display| ProtocolError::BadRequest(e.to_string());
        let package = PackageId::parse(&self.package).map_err(|e| bad(&e))?;
        let version = Version::parse(&self.version).map_err(|e| bad(&e))?;
        let flags = UseFlagSet::from_flags(&self.useflags).map_err(|e| bad(&e))?;
        Ok(BuildKey::new(package, version, flags))
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }

    pub fn decode(text: &str) -> Result<Self, ProtocolError> {
        serde_json::from_str(text).map_err(|e| ProtocolError::Undecodable(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    Available { url: String },
    Pending,
    Failed { error: String },
}

#[derive(Serialize, Deserialize)]
struct RawResponse {
    status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl Response {
    pub fn status(&self) -> &'static str {
        match self {
            Response::Available { .. } => "available",
            Response::Pending => "pending",
            Response::Failed { .. } => "failed",
        }
    }

    pub fn encode(&self) -> String {
        let (url, error) = match self {
            Response::Available { url } => (Some(url.clone()), None),
            Response::Pending => (None, None),
            Response::Failed { error } => (None, Some(error.clone())),
        };
        serde_json::to_string(&RawResponse { status: self.status().to_string(), url, error }).expect("response serializes")
    }

    pub fn decode(text: &str) -> Result<Self, ProtocolError> {
        let raw: RawResponse = serde_json::from_str(text).map_err(|e| ProtocolError::Undecodable(e.to_string()))?;
        match raw.status.as_str() {
            "available" => Ok(Response::Available { url: raw.url.ok_or(ProtocolError::MissingUrl)? }),
            "pending" => Ok(Response::Pending),
            "failed" => Ok(Response::Failed { error: raw.error.ok_or(ProtocolError::MissingError)? }),
            other => Err(ProtocolError::UnknownStatus(other.to_string())),
        }
    }
}
