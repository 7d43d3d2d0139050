use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pacloud_core::bench::{render_table, run_makespan, scenario, DeviceTimeTable, JobSpec};

/// Runs a batch of simulated builds on a farm and reports the schedule.
#[derive(Parser)]
#[command(name = "pacloud-bench")]
struct Args {
    #[arg(long)]
    workers: usize,
    /// JSON list of `{"key": "cat/name-ver[flags]", "duration": seconds}`.
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    jobs: Option<PathBuf>,
    /// Built-in job set: `fig13` or `parallel-16` (16 jobs), `parallel-17` (17 jobs).
    #[arg(long)]
    scenario: Option<String>,
    /// Where to write the JSON report.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn run(args: Args) -> Result<(), String> {
    let jobs: Vec<JobSpec> = match (&args.jobs, &args.scenario) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        (None, Some(name)) => scenario(name, &DeviceTimeTable::embedded()).map_err(|e| e.to_string())?,
        (None, None) => unreachable!("clap requires one of --jobs and --scenario"),
    };
    let report = run_makespan(args.workers, &jobs).map_err(|e| e.to_string())?;
    if let Some(path) = &args.report {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(path, json + "\n").map_err(|e| format!("{}: {e}", path.display()))?;
    }
    print!("{}", render_table(&report));
    Ok(())
}

fn main() -> ExitCode {
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
            eprintln!("pacloud-bench: {e}");
            ExitCode::from(1)
        }
    }
}
