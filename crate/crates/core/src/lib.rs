//! Domain core for a two-person biosignal messaging service.
//!
//! Partners exchange *states* (emotions, activities, greetings, affection)
//! and answer each other with *reacts*. With sensing on, the states offered
//! to a user are recommended from their heart rate, motion and local time;
//! with sensing off they are drawn at random.
//!
//! Heart-rate arithmetic is generic over the float type; the aliases below fix
//! it to `f64`, which is what the rest of the system uses.

pub mod arousal;
pub mod clock;
pub mod feed;
pub mod interaction;
pub mod model;
pub mod notifier;
pub mod rng;
pub mod sensing;
pub mod time;
pub mod trace;

pub use arousal::{build_thresholds, classify_arousal, effective_bpm, ArousalThresholds, ThresholdConfig};
pub use clock::{Clock, SystemClock, VirtualClock};
pub use feed::SensorBuffer;
pub use interaction::{InteractionError, InteractionSession, Phase, ReactPrompt, ShareSource};
pub use model::{
    ArousalLevel, DailyProfile, HeartRateSample, MessageBody, MessageId, Mode, MotionLabel, OtterMessage, PairId,
    Provenance, ReactKind, ReactVia, StateFamily, StateKind, UserId,
};
pub use notifier::{Notification, NotificationBody, NotifierConfig, SchedulerState};
pub use sensing::{random_list, rotate_social, sensed_list, SensingConfig, SensorWindow, StateList};
pub use time::{window_id, DailySpan, Timestamp, TzOffset};
pub use trace::{TraceData, TraceEvent};

/// Heart rate in beats per minute.
pub type Bpm = f64;
pub type Sample = HeartRateSample<Bpm>;
pub type Profile = DailyProfile<Bpm>;
pub type Thresholds = ArousalThresholds<Bpm>;
pub type ThresholdSettings = ThresholdConfig<Bpm>;
