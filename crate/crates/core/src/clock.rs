//! Time sources. Everything that needs "now" takes a [`Clock`], so the same
//! code runs against wall time or a simulated clock.

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::time::Timestamp;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs() as i64)
            .unwrap_or(0);
        Timestamp(secs)
    }
}

/// A manually advanced clock. Clones share the same time.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock {
    secs: Arc<AtomicI64>,
}

impl VirtualClock {
    pub fn starting_at(t: Timestamp) -> Self {
        VirtualClock {
            secs: Arc::new(AtomicI64::new(t.unix())),
        }
    }

    pub fn advance(&self, secs: i64) {
        self.secs.fetch_add(secs, Ordering::AcqRel);
    }

    pub fn set(&self, t: Timestamp) {
        self.secs.store(t.unix(), Ordering::Release);
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Timestamp {
        Timestamp(self.secs.load(Ordering::Acquire))
    }
}
