//! A farm simulation wired up as the client's transport, timer and store.
//! Client sleeps advance the farm's virtual clock.

use std::sync::Mutex;
use std::time::Duration;

use crate::atom::BuildKey;
use crate::client::transport::{Timer, Transport, TransportError};
use crate::farm::Simulation;
use crate::store::{MemoryStore, RemoteStore, StoreError};
use crate::wire::WireRequest;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Exchange {
    Request { at: Duration, key: BuildKey },
    Download { at: Duration, path: String },
}

pub struct LoopbackFarm {
    sim: Mutex<Simulation>,
    catalog: MemoryStore,
    exchanges: Mutex<Vec<Exchange>>,
}

impl LoopbackFarm {
    pub fn new(sim: Simulation, catalog: MemoryStore) -> Self {
        LoopbackFarm { sim: Mutex::new(sim), catalog, exchanges: Mutex::new(Vec::new()) }
    }

    pub fn catalog(&self) -> &MemoryStore {
        &self.catalog
    }

    pub fn with_sim<R>(&self, f: impl FnOnce(&mut Simulation) -> R) -> R {
        f(&mut self.sim.lock().unwrap())
    }

    /// Requests and downloads seen so far, in order.
    pub fn exchanges(&self) -> Vec<Exchange> {
        self.exchanges.lock().unwrap().clone()
    }

    pub fn requests(&self) -> Vec<BuildKey> {
        self.exchanges()
            .into_iter()
            .filter_map(|e| match e {
                Exchange::Request { key, .. } => Some(key),
                Exchange::Download { .. } => None,
            })
            .collect()
    }

    pub fn clear_exchanges(&self) {
        self.exchanges.lock().unwrap().clear();
    }
}

impl Transport for LoopbackFarm {
    fn exchange(&self, request: &str) -> Result<String, TransportError> {
        let sim = self.sim.lock().unwrap();
        if let Ok(key) = WireRequest::decode(request).and_then(|r| r.to_key()) {
            self.exchanges.lock().unwrap().push(Exchange::Request { at: sim.now(), key });
        }
        Ok(sim.farm.handle_wire(request, sim.now()))
    }
}

impl Timer for LoopbackFarm {
    fn now(&self) -> Duration {
        self.sim.lock().unwrap().now()
    }

    fn sleep(&self, d: Duration) {
        let mut sim = self.sim.lock().unwrap();
        let until = sim.now() + d;
        sim.run_until(until);
    }
}

impl RemoteStore for LoopbackFarm {
    fn fetch(&self, path: &str) -> Result<Vec<u8>, StoreError> {
        if path.starts_with("artifacts/") {
            let sim = self.sim.lock().unwrap();
            self.exchanges.lock().unwrap().push(Exchange::Download { at: sim.now(), path: path.to_string() });
            return sim.farm.artifacts.fetch(path);
        }
        self.catalog.fetch(path)
    }
}
