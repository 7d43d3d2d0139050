//! Long-running farm: wire protocol on a Unix socket, worker threads on the
//! wall clock, stores persisted under a root directory.

use std::io::{self, BufRead, BufReader, Write};
use std::os::unix::net::{UnixListener, UnixStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::farm::clock::Clock;
use crate::farm::executor::ExecutorFactory;
use crate::farm::queue::QueueConfig;
use crate::farm::worker::{Worker, WorkerConfig};
use crate::farm::Farm;

const IDLE_WAIT: Duration = Duration::from_millis(20);
const MAX_SLEEP: Duration = Duration::from_millis(200);

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub root: PathBuf,
    pub socket: PathBuf,
    pub workers: usize,
    pub worker: WorkerConfig,
    pub queue: QueueConfig,
}

pub struct FarmService {
    farm: Arc<Farm>,
    shutdown: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
    socket: PathBuf,
}

impl FarmService {
    pub fn start(
        config: ServiceConfig,
        factory: Arc<dyn ExecutorFactory>,
        clock: Arc<dyn Clock>,
    ) -> io::Result<Self> {
        let farm = Arc::new(Farm::open(config.queue, &config.root)?);
        if config.socket.exists() {
            std::fs::remove_file(&config.socket)?;
        }
        let listener = UnixListener::bind(&config.socket)?;
        listener.set_nonblocking(true)?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let mut threads = Vec::new();

        {
            let farm = Arc::clone(&farm);
            let clock = Arc::clone(&clock);
            let shutdown = Arc::clone(&shutdown);
            threads.push(thread::spawn(move || accept_loop(listener, farm, clock, shutdown)));
        }
        for id in 0..config.workers {
            let mut worker = Worker::new(id, config.worker, Arc::clone(&factory), clock.now());
            let farm = Arc::clone(&farm);
            let clock = Arc::clone(&clock);
            let shutdown = Arc::clone(&shutdown);
            threads.push(thread::spawn(move || {
                while !shutdown.load(Ordering::SeqCst) {
                    let now = clock.now();
                    for event in worker.step(&farm, now) {
                        log::info!("worker {id}: {event}");
                    }
                    let wait = worker.next_event_at().map_or(MAX_SLEEP, |t| t.saturating_sub(clock.now()));
                    thread::sleep(wait.clamp(Duration::from_millis(1), MAX_SLEEP));
                }
            }));
        }
        Ok(FarmService { farm, shutdown, threads, socket: config.socket })
    }

    pub fn farm(&self) -> &Arc<Farm> {
        &self.farm
    }

    pub fn socket(&self) -> &Path {
        &self.socket
    }

    pub fn is_running(&self) -> bool {
        !self.shutdown.load(Ordering::SeqCst)
    }

    /// Stops all threads and removes the socket.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        let _ = std::fs::remove_file(&self.socket);
    }
}

impl Drop for FarmService {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(listener: UnixListener, farm: Arc<Farm>, clock: Arc<dyn Clock>, shutdown: Arc<AtomicBool>) {
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let farm = Arc::clone(&farm);
                let clock = Arc::clone(&clock);
                thread::spawn(move || {
                    if let Err(e) = serve_connection(stream, &farm, clock.as_ref()) {
                        log::warn!("connection error: {e}");
                    }
                });
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(IDLE_WAIT),
            Err(e) => {
                log::error!("accept failed: {e}");
                thread::sleep(IDLE_WAIT);
            }
        }
    }
}

/// One request line in, one response line out.
fn serve_connection(stream: UnixStream, farm: &Farm, clock: &dyn Clock) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let reply = farm.handle_wire(&line, clock.now());
    let mut stream = stream;
    stream.write_all(reply.as_bytes())?;
    stream.write_all(b"\n")?;
    stream.flush()
}

/// Sends one raw request line to a farm socket and returns the reply line.
pub fn exchange(socket: &Path, request: &str) -> io::Result<String> {
    let mut stream = UnixStream::connect(socket)?;
    stream.write_all(request.as_bytes())?;
    stream.write_all(b"\n")?;
    stream.shutdown(std::net::Shutdown::Write)?;
    let mut reply = String::new();
    BufReader::new(stream).read_line(&mut reply)?;
    Ok(reply.trim_end().to_string())
}
