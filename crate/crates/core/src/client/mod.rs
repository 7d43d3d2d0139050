//! The package manager client: configuration, argument parsing, farm
//! requests with poll-wait, and the install/remove/upgrade/update/search verbs.

pub mod cli;
pub mod config;
pub mod loopback;
pub mod transport;

use std::collections::BTreeSet;
use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

use crate::archive::{remove_files, unpack_archive, ArchiveError};
use crate::atom::{AtomError, BuildKey, DependencyAtom, PackageId};
use crate::db::{DbError, LocalDb};
use crate::resolver::{compute_orphans, resolve_runtime_closure, runtime_dependencies, DbSnapshot, ResolveError};
use crate::store::{artifact_path_for_url, RemoteStore, StoreError};
use crate::version::Version;
use crate::wire::{ProtocolError, Response, WireRequest};

pub use cli::{cli_parse, Command, Invocation, UsageError, USAGE};
pub use config::{config_path, load_config, parse_config, Config, ConfigError};
pub use loopback::{Exchange, LoopbackFarm};
pub use transport::{store_for_url, transport_for_url, SystemTimer, Timer, Transport, TransportError};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Usage(#[from] UsageError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error(transparent)]
    Atom(#[from] AtomError),
    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("build of {key} failed: {error}")]
    BuildFailed { key: Box<BuildKey>, error: String },
    #[error("gave up on {key} after {}s", waited.as_secs())]
    Timeout { key: Box<BuildKey>, waited: Duration },
    #[error("download of {url} failed: {source}")]
    Download { url: String, source: StoreError },
    #[error("unrecognized artifact url {0:?}")]
    BadArtifactUrl(String),
    #[error("cannot unpack archive: {0}")]
    Archive(#[from] ArchiveError),
    #[error("{name} is ambiguous: {}", candidates.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "))]
    AmbiguousName { name: String, candidates: Vec<PackageId> },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ClientError {
    /// 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// Append-only log of operations, one timestamped line each.
#[derive(Debug, Clone)]
pub struct ActivityLog {
    path: Option<PathBuf>,
}

impl ActivityLog {
    pub fn new(path: Option<PathBuf>) -> Self {
        ActivityLog { path }
    }

    pub fn record(&self, message: &str) {
        let Some(path) = &self.path else { return };
        let line = format!("{} {message}\n", chrono::Local::now().format("%Y-%m-%dT%H:%M:%S%.3f%z"));
        let written = (|| {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            OpenOptions::new().create(true).append(true).open(path)?.write_all(line.as_bytes())
        })();
        if let Err(e) = written {
            log::warn!("cannot write log {}: {e}", path.display());
        }
    }
}

pub struct Session<'a> {
    pub config: Config,
    pub db: LocalDb,
    transport: Option<&'a dyn Transport>,
    store: Option<&'a dyn RemoteStore>,
    timer: &'a dyn Timer,
    log: ActivityLog,
}

/// Turns a command-line package argument into an atom. A bare name with no
/// category is looked up in the database and must be unique.
pub fn parse_target(db: &DbSnapshot, text: &str) -> Result<DependencyAtom, ClientError> {
    if text.contains('/') {
        return Ok(DependencyAtom::parse(text)?);
    }
    let candidates: Vec<PackageId> = db.keys().filter(|p| p.name() == text).cloned().collect();
    match candidates.len() {
        1 => Ok(DependencyAtom::any(candidates.into_iter().next().expect("one candidate"))),
        0 => Err(ResolveError::MissingPackage(PackageId::new("unknown", text)?).into()),
        _ => Err(ClientError::AmbiguousName { name: text.to_string(), candidates }),
    }
}

struct Step {
    package: PackageId,
    version: Version,
    deps: Vec<PackageId>,
}

impl<'a> Session<'a> {
    pub fn new(
        config: Config,
        transport: Option<&'a dyn Transport>,
        store: Option<&'a dyn RemoteStore>,
        timer: &'a dyn Timer,
    ) -> Self {
        let db = LocalDb::new(&config.db_path);
        let log = ActivityLog::new(Some(config.log_path.clone()));
        Session { config, db, transport, store, timer, log }
    }

    fn transport(&self) -> Result<&'a dyn Transport, ClientError> {
        self.transport.ok_or(ClientError::Config(ConfigError::MissingServerUrl("api_url")))
    }

    fn store(&self) -> Result<&'a dyn RemoteStore, ClientError> {
        self.store.ok_or(ClientError::Config(ConfigError::MissingServerUrl("store_url")))
    }

    pub fn execute(&self, command: &Command, out: &mut dyn Write) -> Result<(), ClientError> {
        let result = match command {
            Command::Search(key) => self.cmd_search(key, out),
            Command::Install(targets) => self.cmd_install(targets, out),
            Command::Remove(targets) => self.cmd_remove(targets, out),
            Command::Upgrade(targets) => self.cmd_upgrade(targets, out),
            Command::Update => self.cmd_update(out),
            Command::Help => writeln!(out, "{USAGE}").map_err(Into::into),
        };
        if let Err(e) = &result {
            self.log.record(&format!("error: {e}"));
        }
        result
    }

    pub fn request_package(&self, key: &BuildKey) -> Result<Response, ClientError> {
        let reply = self.transport()?.exchange(&WireRequest::from_key(key).encode())?;
        Ok(Response::decode(&reply)?)
    }

    /// Polls until the farm reports the key available or failed.
    pub fn await_package(&self, key: &BuildKey) -> Result<String, ClientError> {
        let start = self.timer.now();
        let first = self.request_package(key)?;
        self.wait_from(key, first, start)
    }

    fn wait_from(&self, key: &BuildKey, mut response: Response, start: Duration) -> Result<String, ClientError> {
        loop {
            match response {
                Response::Available { url } => return Ok(url),
                Response::Failed { error } => return Err(ClientError::BuildFailed { key: Box::new(key.clone()), error }),
                Response::Pending => {
                    let waited = self.timer.now().saturating_sub(start);
                    if waited >= self.config.timeout {
                        return Err(ClientError::Timeout { key: Box::new(key.clone()), waited });
                    }
                    self.timer.sleep(self.config.poll_interval.min(self.config.timeout - waited));
                    response = self.request_package(key)?;
                }
            }
        }
    }

    fn download(&self, url: &str) -> Result<Vec<u8>, ClientError> {
        let path = artifact_path_for_url(url).ok_or_else(|| ClientError::BadArtifactUrl(url.to_string()))?;
        self.store()?.fetch(&path).map_err(|source| ClientError::Download { url: url.to_string(), source })
    }

    pub fn cmd_search(&self, key: &str, out: &mut dyn Write) -> Result<(), ClientError> {
        let results = self.db.search(key)?;
        writeln!(out, "Results for search key: {key}")?;
        for r in &results {
            let versions: Vec<String> = r.versions.iter().map(ToString::to_string).collect();
            write!(out, "{} ( {} )", r.package, versions.join(" "))?;
            if let Some(v) = &r.installed {
                write!(out, " [installed: {v}]")?;
            }
            writeln!(out)?;
            writeln!(out, "  {}", r.description)?;
        }
        self.log.record(&format!("search {key}: {} result(s)", results.len()));
        Ok(())
    }

    pub fn cmd_update(&self, out: &mut dyn Write) -> Result<(), ClientError> {
        let report = self.db.sync_from_store(self.store()?)?;
        writeln!(out, "{report}")?;
        self.log.record(&format!("update: {}", report.to_string().replace('\n', "; ")));
        Ok(())
    }

    pub fn cmd_install(&self, targets: &[String], out: &mut dyn Write) -> Result<(), ClientError> {
        let snapshot = self.db.snapshot()?;
        let atoms = targets.iter().map(|t| parse_target(&snapshot, t)).collect::<Result<Vec<_>, _>>()?;
        self.install_atoms(&snapshot, &atoms, true, out)
    }

    /// Resolves `atoms`, requests every missing build up front, then installs
    /// in dependency order. Named targets that are already installed are
    /// reinstalled when `reinstall_targets` is set.
    fn install_atoms(
        &self,
        snapshot: &DbSnapshot,
        atoms: &[DependencyAtom],
        reinstall_targets: bool,
        out: &mut dyn Write,
    ) -> Result<(), ClientError> {
        let flags = &self.config.use_flags;
        let plan = resolve_runtime_closure(atoms, snapshot, flags)?;
        let named: BTreeSet<&PackageId> = atoms.iter().map(DependencyAtom::package).collect();

        let mut steps: Vec<Step> = plan
            .steps
            .iter()
            .map(|s| Step { package: s.package.clone(), version: s.version.clone(), deps: s.dependencies.clone() })
            .collect();
        if reinstall_targets {
            for pkg in named.iter().filter(|p| plan.skipped_installed.contains(**p)) {
                let meta = &snapshot[*pkg];
                let version = meta.installed_version().expect("skipped packages are installed");
                let mut deps: Vec<PackageId> = Vec::new();
                for a in runtime_dependencies(meta, &version, flags)? {
                    if !deps.contains(a.package()) {
                        deps.push(a.package().clone());
                    }
                }
                steps.push(Step { package: (*pkg).clone(), version, deps });
            }
        }
        if steps.is_empty() {
            writeln!(out, "nothing to do")?;
            return Ok(());
        }

        let keys: Vec<BuildKey> =
            steps.iter().map(|s| BuildKey::new(s.package.clone(), s.version.clone(), flags.clone())).collect();
        let mut first = std::collections::BTreeMap::new();
        for key in &keys {
            if self.db.archive_cache_get(key)?.is_none() {
                first.insert(key.clone(), (self.timer.now(), self.request_package(key)?));
            }
        }
        if !first.is_empty() {
            writeln!(out, "requested {} build(s)", first.len())?;
        }

        let root = &self.config.install_root;
        for (step, key) in steps.iter().zip(&keys) {
            let bytes = match self.db.archive_cache_get(key)? {
                Some(bytes) => {
                    writeln!(out, ">>> using cached {key}")?;
                    bytes
                }
                None => {
                    let (asked_at, response) = first.remove(key).expect("uncached keys were requested");
                    let url = self.wait_from(key, response, asked_at)?;
                    let bytes = self.download(&url)?;
                    self.db.archive_cache_put(key, &bytes)?;
                    bytes
                }
            };
            let previous = self.db.load(&step.package)?;
            let files = unpack_archive(&bytes, root)?;
            let was_explicit = previous.as_ref().is_some_and(|m| m.installed.is_some() && m.explicit);
            let explicit = was_explicit || (reinstall_targets && named.contains(&step.package));
            self.db.record_install(&step.package, &step.version, explicit, &step.deps, &files)?;
            if let Some(old) = previous.and_then(|m| m.files) {
                let stale: Vec<String> = old.into_iter().filter(|f| !files.contains(f)).collect();
                remove_files(root, &stale)?;
            }
            writeln!(out, ">>> installed {}-{}", step.package, step.version)?;
            self.log.record(&format!("install {}-{} [{}]", step.package, step.version, key.useflags().canonical()));
        }
        Ok(())
    }

    pub fn cmd_remove(&self, targets: &[String], out: &mut dyn Write) -> Result<(), ClientError> {
        let snapshot = self.db.snapshot()?;
        let mut roots = BTreeSet::new();
        for t in targets {
            roots.insert(parse_target(&snapshot, t)?.package().clone());
        }
        let order = compute_orphans(&snapshot, &roots)?;
        for pkg in &order {
            let files = snapshot[pkg].files.clone().unwrap_or_default();
            remove_files(&self.config.install_root, &files)?;
            self.db.record_removal(pkg)?;
            self.db.archive_cache_purge(pkg)?;
            writeln!(out, ">>> removed {pkg}")?;
            self.log.record(&format!("remove {pkg}"));
        }
        Ok(())
    }

    pub fn cmd_upgrade(&self, targets: &[String], out: &mut dyn Write) -> Result<(), ClientError> {
        let snapshot = self.db.snapshot()?;
        let candidates: Vec<PackageId> = if targets.is_empty() {
            snapshot.values().filter(|m| m.installed.is_some() && m.explicit).map(|m| m.name.clone()).collect()
        } else {
            let mut named = Vec::new();
            for t in targets {
                let pkg = parse_target(&snapshot, t)?.package().clone();
                if snapshot[&pkg].installed.is_none() {
                    return Err(ResolveError::NotInstalled(pkg).into());
                }
                named.push(pkg);
            }
            named
        };
        let mut atoms = Vec::new();
        for pkg in candidates {
            let meta = &snapshot[&pkg];
            let installed = meta.installed_version().expect("candidates are installed");
            let any = DependencyAtom::any(pkg.clone());
            let known = meta.known_versions();
            if let Some(best) = crate::atom::select_best_version(&any, &known).filter(|b| **b > installed) {
                writeln!(out, ">>> upgrading {pkg} {installed} -> {best}")?;
                atoms.push(
                    DependencyAtom::versioned(crate::atom::Specifier::Equal, pkg.clone(), best.clone())
                        .expect("= takes a version"),
                );
            }
        }
        if atoms.is_empty() {
            writeln!(out, "all packages are up to date")?;
            return Ok(());
        }
        self.install_atoms(&snapshot, &atoms, false, out)
    }
}
