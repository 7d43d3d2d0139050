//! Discrete-event driver for a farm and its workers on a virtual clock.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use crate::atom::BuildKey;
use crate::farm::clock::{Clock, VirtualClock};
use crate::farm::executor::ExecutorFactory;
use crate::farm::worker::{Worker, WorkerConfig, WorkerEvent, WorkerMode};
use crate::farm::Farm;
use crate::wire::Response;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimEvent {
    Request(BuildKey),
    Crash(usize),
    CrashBeforeFinalize(usize),
    Interrupt { worker: usize, notice: Duration },
    Resume(usize),
    Partition { worker: usize, duration: Duration },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub at: Duration,
    pub worker: usize,
    pub event: WorkerEvent,
}

pub struct Simulation {
    clock: VirtualClock,
    pub farm: Farm,
    workers: Vec<Worker>,
    scheduled: BTreeMap<(Duration, u64), SimEvent>,
    seq: u64,
    log: Vec<LogEntry>,
    responses: Vec<(Duration, BuildKey, Response)>,
}

impl Simulation {
    pub fn new(farm: Farm, workers: usize, config: WorkerConfig, factory: Arc<dyn ExecutorFactory>) -> Self {
        let workers = (0..workers).map(|id| Worker::new(id, config, Arc::clone(&factory), Duration::ZERO)).collect();
        Simulation {
            clock: VirtualClock::new(),
            farm,
            workers,
            scheduled: BTreeMap::new(),
            seq: 0,
            log: Vec::new(),
            responses: Vec::new(),
        }
    }

    pub fn now(&self) -> Duration {
        self.clock.now()
    }

    pub fn workers(&self) -> &[Worker] {
        &self.workers
    }

    pub fn worker_mut(&mut self, id: usize) -> &mut Worker {
        &mut self.workers[id]
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    /// Responses to scheduled `Request` events, in the order handled.
    pub fn responses(&self) -> &[(Duration, BuildKey, Response)] {
        &self.responses
    }

    pub fn schedule(&mut self, at: Duration, event: SimEvent) {
        assert!(at >= self.now(), "cannot schedule in the past");
        self.seq += 1;
        self.scheduled.insert((at, self.seq), event);
    }

    pub fn request(&mut self, key: &BuildKey) -> Response {
        let response = self.farm.handle_request(key, self.now());
        self.responses.push((self.now(), key.clone(), response.clone()));
        response
    }

    fn apply(&mut self, event: SimEvent) {
        let now = self.now();
        let (worker, events) = match event {
            SimEvent::Request(key) => {
                self.request(&key);
                return;
            }
            SimEvent::Crash(w) => (w, self.workers[w].crash()),
            SimEvent::CrashBeforeFinalize(w) => {
                self.workers[w].arm_crash_before_finalize();
                return;
            }
            SimEvent::Interrupt { worker, notice } => (worker, self.workers[worker].interrupt(now, notice)),
            SimEvent::Resume(w) => (w, self.workers[w].resume(&self.farm, now)),
            SimEvent::Partition { worker, duration } => {
                self.workers[worker].partition_until(now + duration);
                return;
            }
        };
        self.record(worker, events);
    }

    fn record(&mut self, worker: usize, events: Vec<WorkerEvent>) {
        let at = self.now();
        self.log.extend(events.into_iter().map(|event| LogEntry { at, worker, event }));
    }

    /// Earliest pending scheduled event or worker activity.
    pub fn next_event_at(&self) -> Option<Duration> {
        let scheduled = self.scheduled.keys().next().map(|(t, _)| *t);
        let workers = self.workers.iter().filter_map(Worker::next_event_at).min();
        match (scheduled, workers) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Processes everything due at the next event time, if it is ≤ `limit`.
    /// Returns whether anything was processed.
    fn advance_once(&mut self, limit: Duration) -> bool {
        let Some(t) = self.next_event_at().filter(|t| *t <= limit) else {
            return false;
        };
        self.clock.set(t.max(self.now()));
        let now = self.now();
        while let Some(entry) = self.scheduled.first_entry() {
            if entry.key().0 > now {
                break;
            }
            let event = entry.remove();
            self.apply(event);
        }
        for i in 0..self.workers.len() {
            if self.workers[i].next_event_at().is_some_and(|at| at <= now) {
                let events = self.workers[i].step(&self.farm, now);
                self.record(i, events);
            }
        }
        true
    }

    pub fn run_until(&mut self, t: Duration) {
        while self.advance_once(t) {}
        if t > self.now() {
            self.clock.set(t);
        }
    }

    /// True when nothing further can happen without an external event: no
    /// scheduled events, no builds running, and no queued message that an
    /// idle worker could still pick up.
    pub fn is_quiescent(&self) -> bool {
        let any_idle = self.workers.iter().any(|w| *w.mode() == WorkerMode::Idle);
        self.scheduled.is_empty()
            && !self.workers.iter().any(Worker::is_building)
            && (self.farm.queue.is_empty() || !any_idle)
    }

    /// Runs until quiescent or until `limit`; returns whether quiescence was reached.
    pub fn run_until_quiescent(&mut self, limit: Duration) -> bool {
        while !self.is_quiescent() {
            if !self.advance_once(limit) {
                return self.is_quiescent();
            }
        }
        true
    }
}
