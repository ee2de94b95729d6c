use serde::{Deserialize, Serialize};

use otterlink_core::{Mode, NotifierConfig, SensingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub sensing: SensingConfig,
    pub notifier: NotifierConfig,
    /// Mode given to newly created pairs.
    pub default_mode: Mode,
    /// Used when a user registers without a timezone.
    pub default_tz_offset_mins: i32,
    /// Root of every token, per-user seed and scheduler draw.
    pub seed: u64,
    /// Pushes held per disconnected user before the oldest are dropped.
    pub offline_buffer: usize,
    /// Write a snapshot after this many log records (0 disables).
    pub snapshot_every: u64,
    /// fsync after every log append.
    pub fsync: bool,
    /// Seconds between scheduler ticks on a live server.
    pub tick_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            sensing: SensingConfig::default(),
            notifier: NotifierConfig::default(),
            default_mode: Mode::SensingOff,
            default_tz_offset_mins: 0,
            seed: 0x07_7E_12,
            offline_buffer: 1000,
            snapshot_every: 1000,
            fsync: false,
            tick_secs: 30,
        }
    }
}
