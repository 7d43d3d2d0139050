//! The build farm: request handling, compile queue, record and artifact
//! stores, and workers. All timestamps are passed in by the caller.

pub mod clock;
pub mod command;
pub mod executor;
pub mod queue;
pub mod records;
#[cfg(unix)]
pub mod service;
pub mod sim;
pub mod worker;

use std::io;
use std::path::Path;
use std::time::Duration;

pub use clock::{Clock, VirtualClock, WallClock};
pub use command::generate_emerge_commands;
pub use executor::{BuildExecutor, ExecutorFactory, JobBehavior, JobTable, SimulatedFactory};
pub use queue::{CompileQueue, QueueConfig, QueueMessage, ReceiptHandle, StaleHandle};
pub use records::{ArtifactStore, BuildRecord, BuildStatus, RecordStore};
pub use sim::{SimEvent, Simulation};
pub use worker::{worker_step, Worker, WorkerConfig, WorkerEvent, WorkerMode};

use crate::atom::BuildKey;
use crate::store::{RemoteStore, StoreError, ARTIFACT_URL_SCHEME};
use crate::wire::{Response, WireRequest};
use records::PendingOutcome;

/// Notice given before a spot worker is reclaimed.
pub const INTERRUPTION_NOTICE: Duration = Duration::from_secs(120);

pub struct Farm {
    pub queue: CompileQueue,
    pub records: RecordStore,
    pub artifacts: ArtifactStore,
}

impl Farm {
    pub fn new(queue: QueueConfig) -> Self {
        Farm { queue: CompileQueue::new(queue), records: RecordStore::new(), artifacts: ArtifactStore::new() }
    }

    /// A farm whose stores persist under `root`: `queue.json`,
    /// `records.json` and `store/artifacts/`.
    pub fn open(queue: QueueConfig, root: &Path) -> io::Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Farm {
            queue: CompileQueue::open(queue, root.join("queue.json"))?,
            records: RecordStore::open(root.join("records.json"))?,
            artifacts: ArtifactStore::open(root.join("store")),
        })
    }

    pub fn handle_request(&self, key: &BuildKey, now: Duration) -> Response {
        match self.records.get_or_create_pending(key, now) {
            PendingOutcome::Created(_) => {
                self.queue.send(&key.canonical(), now);
                Response::Pending
            }
            PendingOutcome::Existing(rec) => match rec.status {
                BuildStatus::Pending => Response::Pending,
                BuildStatus::Built => Response::Available {
                    url: rec.artifact_url.expect("built record carries a url"),
                },
                BuildStatus::Failed => Response::Failed {
                    error: rec.error_message.expect("failed record carries an error"),
                },
            },
        }
    }

    /// Decodes a wire request, handles it and encodes the response. A request
    /// that does not decode to a build key is answered as failed.
    pub fn handle_wire(&self, body: &str, now: Duration) -> String {
        let response = match WireRequest::decode(body.trim()).and_then(|r| r.to_key()) {
            Ok(key) => self.handle_request(&key, now),
            Err(e) => Response::Failed { error: format!("bad request: {e}") },
        };
        response.encode()
    }
}

/// Serves archives by store path (`artifacts/<key>.tar`) so clients can
/// download what the farm built.
impl RemoteStore for ArtifactStore {
    fn fetch(&self, path: &str) -> Result<Vec<u8>, StoreError> {
        let key = path
            .strip_prefix("artifacts/")
            .and_then(|p| p.strip_suffix(".tar"))
            .and_then(|k| BuildKey::parse(k).ok())
            .ok_or_else(|| StoreError::NotFound(path.to_string()))?;
        self.get(&key).ok_or_else(|| StoreError::NotFound(format!("{ARTIFACT_URL_SCHEME}{key}")))
    }
}
