use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use pacloud_core::atom::PackageId;
use pacloud_core::bench::DeviceTimeTable;
use pacloud_core::ebuild::read_ebuild_tree;
use pacloud_core::farm::clock::secs;
use pacloud_core::farm::service::{FarmService, ServiceConfig};
use pacloud_core::farm::{CompileQueue, JobBehavior, JobTable, QueueConfig, SimulatedFactory, WallClock, WorkerConfig};
use pacloud_core::store::DirStore;

#[derive(Parser)]
#[command(name = "pacloud-farm", about = "Build farm for pacloud clients")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve build requests on a Unix socket until interrupted.
    Serve {
        /// State directory: queue.json, records.json and the artifact store.
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        socket: PathBuf,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        /// Machine whose benchmark timings set simulated build durations.
        #[arg(long, default_value = "c5.2xlarge")]
        machine: String,
        /// Multiplier applied to every simulated build duration.
        #[arg(long, default_value_t = 1.0)]
        time_scale: f64,
        /// Duration in seconds of builds with no benchmark entry.
        #[arg(long, default_value_t = 5.0)]
        default_seconds: f64,
        /// `category/name=message`: builds of this package fail with the message.
        #[arg(long = "fail", value_name = "PKG=MESSAGE")]
        failures: Vec<String>,
    },
    /// List messages that exhausted their deliveries.
    DeadLetters {
        #[arg(long)]
        root: PathBuf,
    },
    /// Translate an ebuild tree into catalog documents in a store directory.
    Publish {
        #[arg(long)]
        ebuilds: PathBuf,
        #[arg(long)]
        store: PathBuf,
    },
}

fn job_table(
    machine: &str,
    scale: f64,
    default_seconds: f64,
    failures: &[String],
) -> Result<JobTable, String> {
    if !(scale > 0.0 && default_seconds >= 0.0) {
        return Err("time scale must be positive and default duration non-negative".into());
    }
    let mut table = JobTable::new(JobBehavior::success(secs(default_seconds * scale)));
    let bench = DeviceTimeTable::embedded();
    for row in bench.rows().filter(|r| r.machine == machine) {
        table.set_version(row.package.clone(), row.version.clone(), JobBehavior::success(secs(row.seconds * scale)));
    }
    for spec in failures {
        let (pkg, message) = spec.split_once('=').ok_or_else(|| format!("--fail expects PKG=MESSAGE, got {spec:?}"))?;
        let pkg = PackageId::parse(pkg).map_err(|e| e.to_string())?;
        table.set_package(pkg, JobBehavior::failure(secs(default_seconds * scale), message));
    }
    Ok(table)
}

fn run(args: Args) -> Result<(), String> {
    match args.command {
        Cmd::Serve { root, socket, workers, machine, time_scale, default_seconds, failures } => {
            let table = job_table(&machine, time_scale, default_seconds, &failures)?;
            let config = ServiceConfig {
                root,
                socket,
                workers,
                worker: WorkerConfig::default(),
                queue: QueueConfig::default(),
            };
            let service = FarmService::start(config, Arc::new(SimulatedFactory::new(table)), Arc::new(WallClock))
                .map_err(|e| format!("cannot start farm: {e}"))?;
            log::info!("serving on {}", service.socket().display());
            // Runs until killed; a stale socket is replaced on the next start.
            while service.is_running() {
                std::thread::sleep(Duration::from_secs(1));
            }
            Ok(())
        }
        Cmd::DeadLetters { root } => {
            let queue = CompileQueue::open(QueueConfig::default(), root.join("queue.json")).map_err(|e| e.to_string())?;
            for m in queue.dead_letters() {
                println!("{}\t{}\t{}", m.id, m.receive_count, m.body);
            }
            Ok(())
        }
        Cmd::Publish { ebuilds, store } => {
            let packages = read_ebuild_tree(&ebuilds).map_err(|e| e.to_string())?;
            DirStore::new(&store).publish(&packages).map_err(|e| e.to_string())?;
            println!("published {} packages to {}", packages.len(), store.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pacloud-farm: {e}");
            ExitCode::from(1)
        }
    }
}
