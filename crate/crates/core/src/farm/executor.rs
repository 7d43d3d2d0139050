//! Build executors. A worker asks its factory for a fresh executor for every
//! message; simulated executors take duration and outcome from a job table.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::archive::build_archive;
use crate::atom::{BuildKey, PackageId};
use crate::farm::command::generate_emerge_commands;
use crate::version::Version;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecutionOutcome {
    Built(Vec<u8>),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Execution {
    pub duration: Duration,
    pub outcome: ExecutionOutcome,
}

pub trait BuildExecutor: Send {
    /// Identity of this executor context; unique per factory.
    fn instance(&self) -> u64;
    /// Runs the build. Each executor runs at most one build.
    fn execute(&mut self, key: &BuildKey) -> Execution;
}

pub trait ExecutorFactory: Send + Sync {
    fn create(&self, key: &BuildKey) -> Box<dyn BuildExecutor>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobBehavior {
    pub duration: Duration,
    /// Error text reported instead of an archive.
    pub failure: Option<String>,
}

impl JobBehavior {
    pub fn success(duration: Duration) -> Self {
        JobBehavior { duration, failure: None }
    }

    pub fn failure(duration: Duration, error: impl Into<String>) -> Self {
        JobBehavior { duration, failure: Some(error.into()) }
    }
}

/// Job behaviour by exact key, then by package version (any flags), then a default.
#[derive(Debug, Clone)]
pub struct JobTable {
    by_key: BTreeMap<BuildKey, JobBehavior>,
    by_version: BTreeMap<(PackageId, Version), JobBehavior>,
    by_package: BTreeMap<PackageId, JobBehavior>,
    default: JobBehavior,
}

impl JobTable {
    pub fn new(default: JobBehavior) -> Self {
        JobTable { by_key: BTreeMap::new(), by_version: BTreeMap::new(), by_package: BTreeMap::new(), default }
    }

    pub fn set_key(&mut self, key: BuildKey, behavior: JobBehavior) {
        self.by_key.insert(key, behavior);
    }

    pub fn set_version(&mut self, package: PackageId, version: Version, behavior: JobBehavior) {
        self.by_version.insert((package, version), behavior);
    }

    /// Applies to every version of `package` without a more specific entry.
    pub fn set_package(&mut self, package: PackageId, behavior: JobBehavior) {
        self.by_package.insert(package, behavior);
    }

    /// Most specific entry wins: key, then version, then package.
    pub fn lookup(&self, key: &BuildKey) -> &JobBehavior {
        self.by_key
            .get(key)
            .or_else(|| self.by_version.get(&(key.package().clone(), key.version().clone())))
            .or_else(|| self.by_package.get(key.package()))
            .unwrap_or(&self.default)
    }
}

/// Deterministic payload for a simulated build: one file recording the key
/// and the command a real worker would have run.
pub fn simulated_payload(key: &BuildKey) -> Vec<u8> {
    let path = format!("usr/share/{}/{}-{}/BUILDINFO", key.package().category(), key.package().name(), key.version());
    let body = format!("key: {}\ncommand: {}\n", key.canonical(), generate_emerge_commands(key));
    let files = BTreeMap::from([(path, body.into_bytes())]);
    build_archive(&files).expect("simulated payload paths are relative")
}

pub struct SimulatedExecutor {
    instance: u64,
    table: Arc<JobTable>,
    used: bool,
}

impl BuildExecutor for SimulatedExecutor {
    fn instance(&self) -> u64 {
        self.instance
    }

    fn execute(&mut self, key: &BuildKey) -> Execution {
        assert!(!self.used, "executor {} reused", self.instance);
        self.used = true;
        let behavior = self.table.lookup(key);
        let outcome = match &behavior.failure {
            Some(error) => ExecutionOutcome::Failed(error.clone()),
            None => ExecutionOutcome::Built(simulated_payload(key)),
        };
        Execution { duration: behavior.duration, outcome }
    }
}

/// Hands out simulated executors and records every launch.
pub struct SimulatedFactory {
    table: Arc<JobTable>,
    next_instance: AtomicU64,
    launches: Mutex<Vec<(u64, BuildKey)>>,
}

impl SimulatedFactory {
    pub fn new(table: JobTable) -> Self {
        SimulatedFactory { table: Arc::new(table), next_instance: AtomicU64::new(0), launches: Mutex::new(Vec::new()) }
    }

    pub fn table(&self) -> &JobTable {
        &self.table
    }

    /// Every executor created so far as (instance, key), in creation order.
    pub fn launches(&self) -> Vec<(u64, BuildKey)> {
        self.launches.lock().unwrap().clone()
    }

    pub fn launches_for(&self, key: &BuildKey) -> usize {
        self.launches.lock().unwrap().iter().filter(|(_, k)| k == key).count()
    }
}

impl ExecutorFactory for SimulatedFactory {
    fn create(&self, key: &BuildKey) -> Box<dyn BuildExecutor> {
        let instance = self.next_instance.fetch_add(1, Ordering::SeqCst) + 1;
        self.launches.lock().unwrap().push((instance, key.clone()));
        Box::new(SimulatedExecutor { instance, table: Arc::clone(&self.table), used: false })
    }
}
