//! Time sources. Timestamps are offsets from an origin: the Unix epoch for the
//! wall clock, zero for the virtual clock.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct WallClock;

impl Clock for WallClock {
    fn now(&self) -> Duration {
        SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default()
    }
}

/// Manually advanced clock with nanosecond resolution.
#[derive(Debug, Default)]
pub struct VirtualClock {
    nanos: AtomicU64,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&self, t: Duration) {
        let nanos = u64::try_from(t.as_nanos()).expect("virtual time fits in u64 nanoseconds");
        let prev = self.nanos.swap(nanos, Ordering::SeqCst);
        debug_assert!(prev <= nanos, "virtual clock moved backwards");
    }

    pub fn advance(&self, d: Duration) {
        self.set(self.now() + d);
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.nanos.load(Ordering::SeqCst))
    }
}

/// Seconds (possibly fractional) to a duration, rounded to the millisecond.
pub fn secs(s: f64) -> Duration {
    assert!(s >= 0.0 && s.is_finite(), "negative or non-finite duration {s}");
    Duration::from_millis((s * 1000.0).round() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_advances() {
        let c = VirtualClock::new();
        assert_eq!(c.now(), Duration::ZERO);
        c.advance(secs(2010.77));
        assert_eq!(c.now(), Duration::from_millis(2_010_770));
    }

    #[test]
    fn secs_rounds_to_millis() {
        assert_eq!(secs(168.92), Duration::from_millis(168_920));
        assert_eq!(secs(0.0), Duration::ZERO);
    }
}
