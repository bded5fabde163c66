use std::fmt;
use std::sync::atomic::{AtomicI64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

/// Milliseconds since the Unix epoch (or since run start for logical clocks).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Millis(pub i64);

impl Millis {
    pub fn plus(self, ms: i64) -> Millis {
        Millis(self.0.saturating_add(ms))
    }
}

impl fmt::Display for Millis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

pub trait Clock: Send + Sync + fmt::Debug {
    fn now(&self) -> Millis;

    /// Informs the clock of a timestamp already on record, e.g. when a run
    /// is recovered from disk. Only logical clocks act on it.
    fn observe(&self, _at: Millis) {}
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Millis {
        let d = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default();
        Millis(d.as_millis() as i64)
    }
}

/// Clock that only moves when told to. Used for timer tests.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicI64);

impl ManualClock {
    pub fn new(start: Millis) -> Self {
        ManualClock(AtomicI64::new(start.0))
    }

    pub fn advance(&self, ms: i64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }

    pub fn set(&self, t: Millis) {
        self.0.store(t.0, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Millis {
        Millis(self.0.load(Ordering::SeqCst))
    }
}

/// Ticks by one on every read, so a sequential run produces the same
/// timestamps every time.
#[derive(Debug, Default)]
pub struct LogicalClock(AtomicI64);

impl LogicalClock {
    pub fn starting_after(last: Millis) -> Self {
        LogicalClock(AtomicI64::new(last.0))
    }
}

impl Clock for LogicalClock {
    fn now(&self) -> Millis {
        Millis(self.0.fetch_add(1, Ordering::SeqCst) + 1)
    }

    fn observe(&self, at: Millis) {
        self.0.fetch_max(at.0, Ordering::SeqCst);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logical_clock_ticks_and_observes() {
        let c = LogicalClock::default();
        assert_eq!(c.now(), Millis(1));
        assert_eq!(c.now(), Millis(2));
        c.observe(Millis(40));
        c.observe(Millis(7));
        assert_eq!(c.now(), Millis(41));
    }

    #[test]
    fn manual_clock_ignores_observe() {
        let c = ManualClock::new(Millis(10));
        c.observe(Millis(99));
        c.advance(5);
        assert_eq!(c.now(), Millis(15));
        assert_eq!(c.now(), Millis(15));
    }
}
