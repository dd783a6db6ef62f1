//! Protocol time (a per-client request counter) and wall-clock capabilities.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

/// Per-client counter stamped into every token request. It resets to zero on
/// a key cycle; once it reaches `max` the client must cycle before stamping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolTime {
    pub counter: u64,
    pub max: u64,
}

impl Default for ProtocolTime {
    fn default() -> Self {
        ProtocolTime {
            counter: 0,
            max: u64::MAX,
        }
    }
}

impl ProtocolTime {
    pub fn with_max(max: u64) -> Self {
        ProtocolTime { counter: 0, max }
    }

    pub fn exhausted(&self) -> bool {
        self.counter >= self.max
    }

    pub fn advance(&mut self) {
        self.counter = self.counter.saturating_add(1);
    }

    pub fn reset(&mut self) {
        self.counter = 0;
    }
}

/// Wall-clock instant in whole seconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn plus(self, secs: u64) -> Timestamp {
        Timestamp(self.0.saturating_add(secs))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.0)
    }
}

pub trait Clock: Send + Sync + fmt::Debug {
    fn now(&self) -> Timestamp;
}

pub type SharedClock = Arc<dyn Clock>;

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Timestamp(secs)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start: u64) -> Self {
        ManualClock(AtomicU64::new(start))
    }

    pub fn set(&self, secs: u64) {
        self.0.store(secs, Ordering::SeqCst);
    }

    pub fn advance(&self, secs: u64) {
        self.0.fetch_add(secs, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        Timestamp(self.0.load(Ordering::SeqCst))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_time_limits() {
        let mut t = ProtocolTime::with_max(2);
        assert!(!t.exhausted());
        t.advance();
        t.advance();
        assert!(t.exhausted());
        t.reset();
        assert_eq!(t.counter, 0);
        assert_eq!(ProtocolTime::default().max, u64::MAX);
    }

    #[test]
    fn manual_clock_moves_only_on_request() {
        let c = ManualClock::new(10);
        assert_eq!(c.now(), Timestamp(10));
        c.advance(5);
        assert_eq!(c.now(), Timestamp(15));
        c.set(1);
        assert_eq!(c.now(), Timestamp(1));
    }
}
