//! Wall-clock backing for the core's timing hook.

use std::time::Instant;

use probeweight_core::meta::Clock;

/// Monotonic clock reading nanoseconds since its creation.
pub struct InstantClock {
    start: Instant,
}

impl InstantClock {
    pub fn new() -> Self {
        InstantClock {
            start: Instant::now(),
        }
    }
}

impl Default for InstantClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for InstantClock {
    fn now_nanos(&mut self) -> u64 {
        self.start.elapsed().as_nanos() as u64
    }
}
