//! Compile-request queue with visibility timeouts and a dead-letter queue.
//!
//! A receive hides the message for the visibility timeout and bumps its
//! receive count. A message that is eligible again after its final allowed
//! delivery is moved to the dead-letter queue instead of being delivered.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::db::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("receipt handle for message {message} is stale")]
pub struct StaleHandle {
    pub message: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueMessage {
    pub id: u64,
    pub body: String,
    pub sent_at: Duration,
    pub visible_at: Duration,
    pub receive_count: u32,
}

/// Proof of one particular delivery; invalid once the message is delivered again,
/// deleted or dead-lettered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReceiptHandle {
    pub message: u64,
    pub receipt: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueConfig {
    pub visibility_timeout: Duration,
    pub max_receives: u32,
}

impl Default for QueueConfig {
    fn default() -> Self {
        QueueConfig { visibility_timeout: Duration::from_secs(15), max_receives: 3 }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct QueueState {
    next_id: u64,
    messages: BTreeMap<u64, QueueMessage>,
    dead_letters: Vec<QueueMessage>,
}

#[derive(Debug)]
pub struct CompileQueue {
    config: QueueConfig,
    state: Mutex<QueueState>,
    path: Option<PathBuf>,
}

impl CompileQueue {
    pub fn new(config: QueueConfig) -> Self {
        CompileQueue { config, state: Mutex::new(QueueState::default()), path: None }
    }

    /// A queue persisted as a JSON document at `path`, loaded if present.
    pub fn open(config: QueueConfig, path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let state = match std::fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(std::io::Error::other)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => QueueState::default(),
            Err(e) => return Err(e),
        };
        Ok(CompileQueue { config, state: Mutex::new(state), path: Some(path) })
    }

    pub fn config(&self) -> QueueConfig {
        self.config
    }

    fn persist(&self, state: &QueueState) {
        if let Some(path) = &self.path {
            let bytes = serde_json::to_vec_pretty(state).expect("queue state serializes");
            if let Err(e) = write_atomic(path, &bytes) {
                log::error!("failed to persist queue to {}: {e}", path.display());
            }
        }
    }

    pub fn send(&self, body: &str, now: Duration) -> u64 {
        let mut st = self.state.lock().unwrap();
        st.next_id += 1;
        let id = st.next_id;
        st.messages.insert(id, QueueMessage { id, body: body.to_string(), sent_at: now, visible_at: now, receive_count: 0 });
        self.persist(&st);
        id
    }

    /// Delivers the oldest visible message, dead-lettering any that have used
    /// up their deliveries along the way.
    pub fn receive(&self, now: Duration) -> Option<(QueueMessage, ReceiptHandle)> {
        let mut st = self.state.lock().unwrap();
        let mut delivered = None;
        let mut exhausted = Vec::new();
        for msg in st.messages.values_mut() {
            if now < msg.visible_at {
                continue;
            }
            if msg.receive_count >= self.config.max_receives {
                exhausted.push(msg.id);
                continue;
            }
            msg.receive_count += 1;
            msg.visible_at = now + self.config.visibility_timeout;
            delivered = Some((msg.clone(), ReceiptHandle { message: msg.id, receipt: msg.receive_count }));
            break;
        }
        let changed = delivered.is_some() || !exhausted.is_empty();
        for id in exhausted {
            let msg = st.messages.remove(&id).expect("exhausted message present");
            log::warn!("message {id} ({}) moved to dead-letter queue after {} deliveries", msg.body, msg.receive_count);
            st.dead_letters.push(msg);
        }
        if changed {
            self.persist(&st);
        }
        delivered
    }

    fn check<'a>(st: &'a mut QueueState, handle: &ReceiptHandle) -> Result<&'a mut QueueMessage, StaleHandle> {
        match st.messages.get_mut(&handle.message) {
            Some(m) if m.receive_count == handle.receipt => Ok(m),
            _ => Err(StaleHandle { message: handle.message }),
        }
    }

    pub fn renew(&self, handle: &ReceiptHandle, now: Duration) -> Result<Duration, StaleHandle> {
        let mut st = self.state.lock().unwrap();
        let msg = Self::check(&mut st, handle)?;
        msg.visible_at = now + self.config.visibility_timeout;
        let visible_at = msg.visible_at;
        self.persist(&st);
        Ok(visible_at)
    }

    pub fn delete(&self, handle: &ReceiptHandle) -> Result<(), StaleHandle> {
        let mut st = self.state.lock().unwrap();
        Self::check(&mut st, handle)?;
        st.messages.remove(&handle.message);
        self.persist(&st);
        Ok(())
    }

    pub fn get(&self, id: u64) -> Option<QueueMessage> {
        self.state.lock().unwrap().messages.get(&id).cloned()
    }

    /// Messages still in the main queue, visible or not.
    pub fn len(&self) -> usize {
        self.state.lock().unwrap().messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn messages(&self) -> Vec<QueueMessage> {
        self.state.lock().unwrap().messages.values().cloned().collect()
    }

    /// Maintenance listing of the dead-letter queue.
    pub fn dead_letters(&self) -> Vec<QueueMessage> {
        self.state.lock().unwrap().dead_letters.clone()
    }

    /// Earliest time a message becomes visible, if any message is queued.
    pub fn next_visible_at(&self) -> Option<Duration> {
        self.state.lock().unwrap().messages.values().map(|m| m.visible_at).min()
    }
}
