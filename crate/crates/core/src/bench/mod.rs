//! Desk-scale reproductions: parallel-build makespan on the simulated farm,
//! device speedup ratios, and storage cost arithmetic.

pub mod data;
pub mod timefmt;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use data::{BenchmarkRow, DeviceTimeTable};
pub use timefmt::parse_time;

use crate::atom::{BuildKey, PackageId, UseFlagSet};
use crate::farm::clock::secs;
use crate::farm::{
    BuildStatus, Farm, JobBehavior, JobTable, QueueConfig, SimulatedFactory, Simulation, WorkerConfig, WorkerEvent,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("at least one worker is required")]
    NoWorkers,
    #[error("at least one job is required")]
    NoJobs,
    #[error("job {0} appears twice")]
    DuplicateJob(BuildKey),
    #[error("job {0} has a non-positive duration")]
    BadDuration(BuildKey),
    #[error("job {0} did not finish")]
    Unfinished(BuildKey),
    #[error("unknown machine {0:?}")]
    UnknownMachine(String),
    #[error("unknown package {0}")]
    UnknownPackage(PackageId),
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub key: BuildKey,
    /// Seconds.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobTiming {
    pub key: BuildKey,
    pub duration: f64,
    pub worker: usize,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MakespanReport {
    pub workers: usize,
    /// Completion time of the last job, seconds after the requests.
    pub total: f64,
    pub jobs: Vec<JobTiming>,
    /// Busy fraction of `total` per worker.
    pub utilization: Vec<f64>,
}

/// Requests every job at t = 0 from a farm with `num_workers` workers polling
/// every second, runs the virtual clock until all are built, and reads the
/// schedule back from the build records.
pub fn run_makespan(num_workers: usize, jobs: &[JobSpec]) -> Result<MakespanReport, BenchError> {
    if num_workers == 0 {
        return Err(BenchError::NoWorkers);
    }
    if jobs.is_empty() {
        return Err(BenchError::NoJobs);
    }
    let mut seen = BTreeSet::new();
    let mut table = JobTable::new(JobBehavior::success(secs(1.0)));
    for job in jobs {
        if !seen.insert(job.key.clone()) {
            return Err(BenchError::DuplicateJob(job.key.clone()));
        }
        if !(job.duration > 0.0 && job.duration.is_finite()) {
            return Err(BenchError::BadDuration(job.key.clone()));
        }
        table.set_key(job.key.clone(), JobBehavior::success(secs(job.duration)));
    }

    let factory = Arc::new(SimulatedFactory::new(table));
    let mut sim = Simulation::new(Farm::new(QueueConfig::default()), num_workers, WorkerConfig::default(), factory);
    for job in jobs {
        sim.request(&job.key);
    }
    let horizon = secs(jobs.iter().map(|j| j.duration).sum::<f64>() * 2.0 + 3600.0);
    sim.run_until_quiescent(horizon);

    let mut timings = Vec::new();
    for job in jobs {
        let rec = sim.farm.records.get(&job.key).filter(|r| r.status == BuildStatus::Built);
        let (Some(start), Some(end)) = (rec.as_ref().and_then(|r| r.started_at), rec.as_ref().and_then(|r| r.completed_at))
        else {
            return Err(BenchError::Unfinished(job.key.clone()));
        };
        let worker = sim
            .log()
            .iter()
            .find(|e| matches!(&e.event, WorkerEvent::Published { key, .. } if *key == job.key))
            .map(|e| e.worker)
            .expect("a built record was published by a worker");
        timings.push(JobTiming {
            key: job.key.clone(),
            duration: job.duration,
            worker,
            start: start.as_secs_f64(),
            end: end.as_secs_f64(),
        });
    }
    let total = timings.iter().map(|t| t.end).fold(0.0, f64::max);
    let utilization = (0..num_workers)
        .map(|w| {
            let busy: f64 = timings.iter().filter(|t| t.worker == w).map(|t| t.end - t.start).sum();
            if total > 0.0 { busy / total } else { 0.0 }
        })
        .collect();
    Ok(MakespanReport { workers: num_workers, total, jobs: timings, utilization })
}

/// Monthly storage cost in dollars: `n × mb / 1024 × price_per_gb_month`.
pub fn estimate_storage_cost(n_packages: u64, avg_package_mb: f64, price_per_gb_month: f64) -> f64 {
    n_packages as f64 * avg_package_mb / 1024.0 * price_per_gb_month
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub package: PackageId,
    pub baseline: String,
    pub target: String,
    pub baseline_seconds: f64,
    pub target_seconds: f64,
    /// target / baseline.
    pub ratio: f64,
}

impl Comparison {
    pub fn percent(&self) -> f64 {
        self.ratio * 100.0
    }

    pub fn report(&self) -> String {
        format!(
            "{}: {} takes {:.2}% of the time of {} ({:.2} s vs {:.2} s)",
            self.package,
            self.target,
            self.percent(),
            self.baseline,
            self.target_seconds,
            self.baseline_seconds
        )
    }
}

pub fn device_comparison(
    table: &DeviceTimeTable,
    package: &PackageId,
    baseline: &str,
    target: &str,
) -> Result<Comparison, BenchError> {
    if table.version_of(package).is_none() {
        return Err(BenchError::UnknownPackage(package.clone()));
    }
    let lookup = |machine: &str| {
        table.get(package, machine).map(|r| r.seconds).ok_or_else(|| BenchError::UnknownMachine(machine.to_string()))
    };
    let baseline_seconds = lookup(baseline)?;
    let target_seconds = lookup(target)?;
    Ok(Comparison {
        package: package.clone(),
        baseline: baseline.to_string(),
        target: target.to_string(),
        baseline_seconds,
        target_seconds,
        ratio: target_seconds / baseline_seconds,
    })
}

const FLAG_POOL: [&str; 4] = ["cxx", "nls", "openmp", "static-libs"];

/// Distinct flag sets (subsets of a small pool) for the n-th copy of a job.
fn variant_flags(n: usize) -> UseFlagSet {
    UseFlagSet::from_flags(FLAG_POOL.iter().enumerate().filter(|(i, _)| n & (1 << i) != 0).map(|(_, f)| *f))
        .expect("pool flags are valid")
}

/// The parallel-install scenario: `count` distinct builds of the two
/// benchmarked packages (alternating, varied by USE flags) with their
/// durations on `machine`. Job 17 onwards are short packages only.
pub fn parallel_scenario(table: &DeviceTimeTable, machine: &str, count: usize) -> Result<Vec<JobSpec>, BenchError> {
    let gcc = PackageId::parse("sys-devel/gcc").expect("valid id");
    let ncurses = PackageId::parse("sys-libs/ncurses").expect("valid id");
    let row = |p: &PackageId| table.get(p, machine).ok_or_else(|| BenchError::UnknownMachine(machine.to_string()));
    let (long, short) = (row(&gcc)?, row(&ncurses)?);
    let mut jobs = Vec::new();
    let (mut n_long, mut n_short) = (0, 0);
    for i in 0..count {
        let (r, n) = if i % 2 == 0 && i < 16 { (long, &mut n_long) } else { (short, &mut n_short) };
        let key = BuildKey::new(r.package.clone(), r.version.clone(), variant_flags(*n));
        *n += 1;
        jobs.push(JobSpec { key, duration: r.seconds });
    }
    Ok(jobs)
}

/// Named scenarios for the command-line harness.
pub fn scenario(name: &str, table: &DeviceTimeTable) -> Result<Vec<JobSpec>, BenchError> {
    match name {
        "fig13" | "parallel-16" => parallel_scenario(table, "c5.2xlarge", 16),
        "parallel-17" => parallel_scenario(table, "c5.2xlarge", 17),
        other => Err(BenchError::UnknownScenario(other.to_string())),
    }
}

/// Fixed-width text rendering of a report.
pub fn render_table(report: &MakespanReport) -> String {
    let headers = ["job", "worker", "start (s)", "end (s)", "duration (s)"];
    let rows: Vec<[String; 5]> = report
        .jobs
        .iter()
        .map(|j| {
            [
                j.key.to_string(),
                j.worker.to_string(),
                format!("{:.2}", j.start),
                format!("{:.2}", j.end),
                format!("{:.2}", j.duration),
            ]
        })
        .collect();
    let mut widths = headers.map(str::len);
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &headers);
    for r in &rows {
        line(&mut out, &r.each_ref().map(String::as_str));
    }
    let _ = writeln!(out, "total: {:.2} s on {} workers", report.total, report.workers);
    out
}
