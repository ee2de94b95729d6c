//! Replayable sensor input records.

use serde::{Deserialize, Serialize};

use crate::model::{DailyProfile, MotionLabel};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum TraceData {
    Hr { bpm: f64 },
    Motion { label: MotionLabel },
    Profile(DailyProfile<f64>),
}

/// One line of a trace file: `{"t":..,"kind":..,"payload":{..}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t: Timestamp,
    #[serde(flatten)]
    pub data: TraceData,
}

impl TraceEvent {
    pub fn hr(t: Timestamp, bpm: f64) -> Self {
        TraceEvent {
            t,
            data: TraceData::Hr { bpm },
        }
    }

    pub fn motion(t: Timestamp, label: MotionLabel) -> Self {
        TraceEvent {
            t,
            data: TraceData::Motion { label },
        }
    }

    pub fn profile(t: Timestamp, profile: DailyProfile<f64>) -> Self {
        TraceEvent {
            t,
            data: TraceData::Profile(profile),
        }
    }
}
