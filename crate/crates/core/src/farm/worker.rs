//! Spot-style build workers driven by explicit `step` calls at given times.

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use crate::atom::BuildKey;
use crate::farm::executor::{ExecutionOutcome, ExecutorFactory};
use crate::farm::queue::ReceiptHandle;
use crate::farm::records::{BuildResult, BuildStatus};
use crate::farm::Farm;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkerConfig {
    pub poll_interval: Duration,
    pub renewal_interval: Duration,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        WorkerConfig { poll_interval: Duration::from_secs(1), renewal_interval: Duration::from_secs(10) }
    }
}

/// A build in progress. `remaining` is the work left as of `progress_at`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveBuild {
    pub handle: ReceiptHandle,
    pub key: BuildKey,
    pub executor: u64,
    pub started_at: Duration,
    pub remaining: Duration,
    pub progress_at: Duration,
    pub next_renewal_at: Duration,
    outcome: ExecutionOutcome,
    hibernate_at: Option<Duration>,
    park_when_done: bool,
}

impl ActiveBuild {
    /// Accounts for work done up to `now`, never past a scheduled hibernation.
    fn advance(&mut self, now: Duration) {
        let until = self.hibernate_at.map_or(now, |h| h.min(now));
        if until > self.progress_at {
            self.remaining = self.remaining.saturating_sub(until - self.progress_at);
            self.progress_at = until;
        }
    }

    fn completes_at(&self) -> Duration {
        self.progress_at + self.remaining
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorkerMode {
    Idle,
    Building(ActiveBuild),
    Hibernated(Option<ActiveBuild>),
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorkerEvent {
    Received { key: BuildKey, receive_count: u32, executor: u64 },
    Renewed { key: BuildKey, visible_until: Duration },
    RenewStale { key: BuildKey },
    RenewFailed { key: BuildKey },
    Published { key: BuildKey, status: BuildStatus },
    /// Another worker's terminal write landed first.
    LostRace { key: BuildKey },
    /// The key was already terminal when the build finished.
    Discarded { key: BuildKey },
    StoreFailed { key: BuildKey, error: String },
    Hibernated,
    Resumed,
    Crashed,
}

impl fmt::Display for WorkerEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorkerEvent::Received { key, receive_count, executor } => {
                write!(f, "received {key} (delivery {receive_count}, executor {executor})")
            }
            WorkerEvent::Renewed { key, visible_until } => {
                write!(f, "renewed {key} until {:.3}", visible_until.as_secs_f64())
            }
            WorkerEvent::RenewStale { key } => write!(f, "renewal of {key} rejected: stale handle"),
            WorkerEvent::RenewFailed { key } => write!(f, "renewal of {key} failed: unreachable"),
            WorkerEvent::Published { key, status } => write!(f, "published {key} as {status:?}"),
            WorkerEvent::LostRace { key } => write!(f, "result for {key} lost to an earlier write"),
            WorkerEvent::Discarded { key } => write!(f, "discarded result for terminal {key}"),
            WorkerEvent::StoreFailed { key, error } => write!(f, "storing {key} failed: {error}"),
            WorkerEvent::Hibernated => f.write_str("hibernated"),
            WorkerEvent::Resumed => f.write_str("resumed"),
            WorkerEvent::Crashed => f.write_str("crashed"),
        }
    }
}

pub struct Worker {
    id: usize,
    config: WorkerConfig,
    factory: Arc<dyn ExecutorFactory>,
    mode: WorkerMode,
    next_poll_at: Duration,
    partitioned_until: Option<Duration>,
    crash_before_finalize: bool,
}

impl fmt::Debug for Worker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Worker").field("id", &self.id).field("mode", &self.mode).finish_non_exhaustive()
    }
}

impl Worker {
    pub fn new(id: usize, config: WorkerConfig, factory: Arc<dyn ExecutorFactory>, start: Duration) -> Self {
        Worker {
            id,
            config,
            factory,
            mode: WorkerMode::Idle,
            next_poll_at: start,
            partitioned_until: None,
            crash_before_finalize: false,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn mode(&self) -> &WorkerMode {
        &self.mode
    }

    pub fn is_building(&self) -> bool {
        matches!(self.mode, WorkerMode::Building(_))
    }

    /// Next time `step` has something to do; `None` when only an external
    /// event can wake the worker.
    pub fn next_event_at(&self) -> Option<Duration> {
        match &self.mode {
            WorkerMode::Idle => Some(self.next_poll_at),
            WorkerMode::Building(b) => {
                let mut t = b.completes_at().min(b.next_renewal_at);
                if let Some(h) = b.hibernate_at {
                    t = t.min(h);
                }
                Some(t)
            }
            WorkerMode::Hibernated(_) | WorkerMode::Stopped => None,
        }
    }

    pub fn step(&mut self, farm: &Farm, now: Duration) -> Vec<WorkerEvent> {
        let mut events = Vec::new();
        let current = std::mem::replace(&mut self.mode, WorkerMode::Stopped);
        if let WorkerMode::Building(mut b) = current {
            b.advance(now);
            if b.remaining.is_zero() {
                self.mode = self.finish(b, farm, now, &mut events);
                self.next_poll_at = now;
            } else if b.hibernate_at.is_some_and(|h| h <= now) {
                b.hibernate_at = None;
                events.push(WorkerEvent::Hibernated);
                self.mode = WorkerMode::Hibernated(Some(b));
                return events;
            } else {
                if now >= b.next_renewal_at {
                    events.push(self.renew(farm, &b, now));
                    b.next_renewal_at = now + self.config.renewal_interval;
                }
                self.mode = WorkerMode::Building(b);
                return events;
            }
        } else {
            self.mode = current;
        }
        if self.mode == WorkerMode::Idle && now >= self.next_poll_at {
            self.poll(farm, now, &mut events);
        }
        events
    }

    fn renew(&self, farm: &Farm, b: &ActiveBuild, now: Duration) -> WorkerEvent {
        if self.partitioned_until.is_some_and(|until| now < until) {
            return WorkerEvent::RenewFailed { key: b.key.clone() };
        }
        match farm.queue.renew(&b.handle, now) {
            Ok(visible_until) => WorkerEvent::Renewed { key: b.key.clone(), visible_until },
            Err(_) => WorkerEvent::RenewStale { key: b.key.clone() },
        }
    }

    fn poll(&mut self, farm: &Farm, now: Duration, events: &mut Vec<WorkerEvent>) {
        let Some((msg, handle)) = farm.queue.receive(now) else {
            self.next_poll_at = now + self.config.poll_interval;
            return;
        };
        let key = match BuildKey::parse(&msg.body) {
            Ok(k) => k,
            Err(e) => {
                // Unbuildable body: drop it so it cannot block the queue.
                log::error!("worker {}: dropping message {} with bad body {:?}: {e}", self.id, msg.id, msg.body);
                let _ = farm.queue.delete(&handle);
                self.next_poll_at = now;
                return self.poll(farm, now, events);
            }
        };
        let mut executor = self.factory.create(&key);
        let run = executor.execute(&key);
        let build = ActiveBuild {
            handle,
            key: key.clone(),
            executor: executor.instance(),
            started_at: now,
            remaining: run.duration,
            progress_at: now,
            next_renewal_at: now + self.config.renewal_interval,
            outcome: run.outcome,
            hibernate_at: None,
            park_when_done: false,
        };
        events.push(WorkerEvent::Received { key, receive_count: msg.receive_count, executor: build.executor });
        if build.remaining.is_zero() {
            self.mode = self.finish(build, farm, now, events);
            self.next_poll_at = now + self.config.poll_interval;
        } else {
            self.mode = WorkerMode::Building(build);
        }
    }

    fn finish(&mut self, b: ActiveBuild, farm: &Farm, now: Duration, events: &mut Vec<WorkerEvent>) -> WorkerMode {
        let after = if b.park_when_done { WorkerMode::Hibernated(None) } else { WorkerMode::Idle };
        if b.park_when_done {
            events.push(WorkerEvent::Hibernated);
        }
        if farm.records.get(&b.key).is_some_and(|r| r.is_terminal()) {
            events.push(WorkerEvent::Discarded { key: b.key.clone() });
            let _ = farm.queue.delete(&b.handle);
            return after;
        }
        let result = match b.outcome {
            ExecutionOutcome::Built(bytes) => match farm.artifacts.store(&b.key, &bytes) {
                Ok((url, _)) => BuildResult::Built { url },
                Err(e) => {
                    // Leave the message to resurface for another attempt.
                    events.push(WorkerEvent::StoreFailed { key: b.key.clone(), error: e.to_string() });
                    return after;
                }
            },
            ExecutionOutcome::Failed(error) => BuildResult::Failed { error },
        };
        if self.crash_before_finalize {
            events.push(WorkerEvent::Crashed);
            return WorkerMode::Stopped;
        }
        match farm.records.finalize(&b.key, result, b.started_at, now) {
            Ok(rec) => events.push(WorkerEvent::Published { key: b.key.clone(), status: rec.status }),
            Err(_) => events.push(WorkerEvent::LostRace { key: b.key.clone() }),
        }
        let _ = farm.queue.delete(&b.handle);
        after
    }

    /// Spot interruption notice. A build that fits in the notice finishes
    /// and the worker then parks; a longer one hibernates at `now + notice`.
    pub fn interrupt(&mut self, now: Duration, notice: Duration) -> Vec<WorkerEvent> {
        match &mut self.mode {
            WorkerMode::Idle => {
                self.mode = WorkerMode::Hibernated(None);
                vec![WorkerEvent::Hibernated]
            }
            WorkerMode::Building(b) => {
                b.advance(now);
                if b.remaining <= notice {
                    b.park_when_done = true;
                } else {
                    let at = now + notice;
                    b.hibernate_at = Some(b.hibernate_at.map_or(at, |h| h.min(at)));
                }
                Vec::new()
            }
            WorkerMode::Hibernated(_) | WorkerMode::Stopped => Vec::new(),
        }
    }

    pub fn resume(&mut self, farm: &Farm, now: Duration) -> Vec<WorkerEvent> {
        match std::mem::replace(&mut self.mode, WorkerMode::Stopped) {
            WorkerMode::Hibernated(Some(mut b)) => {
                b.progress_at = now;
                let mut events = vec![WorkerEvent::Resumed, self.renew(farm, &b, now)];
                b.next_renewal_at = now + self.config.renewal_interval;
                if b.remaining.is_zero() {
                    self.mode = self.finish(b, farm, now, &mut events);
                    self.next_poll_at = now;
                } else {
                    self.mode = WorkerMode::Building(b);
                }
                events
            }
            WorkerMode::Hibernated(None) => {
                self.mode = WorkerMode::Idle;
                self.next_poll_at = now;
                vec![WorkerEvent::Resumed]
            }
            // Capacity came back within the notice: the interruption is withdrawn.
            WorkerMode::Building(mut b) if b.park_when_done || b.hibernate_at.is_some() => {
                b.park_when_done = false;
                b.hibernate_at = None;
                self.mode = WorkerMode::Building(b);
                vec![WorkerEvent::Resumed]
            }
            other => {
                self.mode = other;
                Vec::new()
            }
        }
    }

    /// The worker vanishes: nothing is deleted or finalized.
    pub fn crash(&mut self) -> Vec<WorkerEvent> {
        if self.mode == WorkerMode::Stopped {
            return Vec::new();
        }
        self.mode = WorkerMode::Stopped;
        vec![WorkerEvent::Crashed]
    }

    /// Makes the worker crash after storing its next artifact but before
    /// writing the record or deleting the message.
    pub fn arm_crash_before_finalize(&mut self) {
        self.crash_before_finalize = true;
    }

    /// Renewals attempted before `until` fail as if the queue were unreachable.
    pub fn partition_until(&mut self, until: Duration) {
        self.partitioned_until = Some(until);
    }
}

/// Advances `worker` to `now`, applying any due completion, renewal,
/// hibernation or poll.
pub fn worker_step(worker: &mut Worker, farm: &Farm, now: Duration) -> Vec<WorkerEvent> {
    worker.step(farm, now)
}
