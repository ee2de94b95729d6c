//! State-list recommendation.
//!
//! Every 10-minute window each user gets a short list of shareable states:
//! sensed from heart rate, motion and local time when the pair runs with
//! sensing on, or drawn at random when it runs with sensing off. Either way
//! exactly one greeting/affection state is included.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arousal::{effective_bpm, thresholds_or_widened, ThresholdConfig};
use crate::model::{ArousalLevel, MotionLabel, StateFamily, StateKind};
use crate::rng;
use crate::time::{DailySpan, Timestamp, TzOffset};
use crate::{Profile, Sample};

/// Emotions offered for each arousal band.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadrantMap {
    pub low: Vec<StateKind>,
    pub neutral: Vec<StateKind>,
    pub high: Vec<StateKind>,
    pub very_high: Vec<StateKind>,
}

impl Default for QuadrantMap {
    fn default() -> Self {
        use StateKind::*;
        QuadrantMap {
            low: vec![Calm, Sad, Bored],
            neutral: vec![Neutral],
            high: vec![Excited, Angry, Surprised],
            very_high: vec![Excited, Angry, Surprised],
        }
    }
}

impl QuadrantMap {
    pub fn get(&self, arousal: ArousalLevel) -> &[StateKind] {
        match arousal {
            ArousalLevel::Low => &self.low,
            ArousalLevel::Neutral => &self.neutral,
            ArousalLevel::High => &self.high,
            ArousalLevel::VeryHigh => &self.very_high,
        }
    }
}

/// Rules and tunables for list generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensingConfig {
    pub thresholds: ThresholdConfig<f64>,
    pub quadrants: QuadrantMap,
    pub meal_windows: Vec<DailySpan>,
    pub sleep_window: DailySpan,
    /// Cap on sensed (non-social) states per list.
    pub max_sensed: usize,
}

impl Default for SensingConfig {
    fn default() -> Self {
        SensingConfig {
            thresholds: ThresholdConfig::default(),
            quadrants: QuadrantMap::default(),
            meal_windows: vec![DailySpan::hours(11, 14), DailySpan::hours(17, 20)],
            sleep_window: DailySpan::hours(22, 8),
            max_sensed: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("quadrant map for {0} is empty")]
    EmptyQuadrant(ArousalLevel),
    #[error("quadrant map entry {0} is not an emotion")]
    NotAnEmotion(StateKind),
    #[error("max_sensed must be between 1 and 4, got {0}")]
    BadCap(usize),
    #[error("kappa must lie in (0, 1)")]
    BadKappa,
}

impl SensingConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for level in ArousalLevel::ALL {
            let states = self.quadrants.get(*level);
            if states.is_empty() {
                return Err(ConfigError::EmptyQuadrant(*level));
            }
            if let Some(bad) = states.iter().find(|s| s.family() != StateFamily::Emotions) {
                return Err(ConfigError::NotAnEmotion(*bad));
            }
        }
        if !(1..=4).contains(&self.max_sensed) {
            return Err(ConfigError::BadCap(self.max_sensed));
        }
        if !(self.thresholds.kappa > 0.0 && self.thresholds.kappa < 1.0) {
            return Err(ConfigError::BadKappa);
        }
        Ok(())
    }
}

/// Everything the sensed list depends on, as of one instant.
#[derive(Debug, Clone, Copy)]
pub struct SensorWindow<'a> {
    pub samples: &'a [Sample],
    pub motion: MotionLabel,
    pub profile: Option<&'a Profile>,
    pub now: Timestamp,
    pub tz: TzOffset,
}

impl SensorWindow<'_> {
    pub fn local_minute(&self) -> u32 {
        self.now.local_minute_of_day(self.tz)
    }

    /// Arousal for this window, falling back to Neutral when there is no
    /// profile or no fresh sample. The flag reports whether it fell back.
    pub fn arousal(&self, config: &SensingConfig) -> (ArousalLevel, bool) {
        let Some(profile) = self.profile else {
            return (ArousalLevel::Neutral, true);
        };
        match effective_bpm(self.samples, self.now, &config.thresholds) {
            Ok(bpm) => (thresholds_or_widened(profile, &config.thresholds).classify(bpm), false),
            Err(_) => (ArousalLevel::Neutral, true),
        }
    }
}

/// A recommended list, frozen for one window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateList {
    pub window_id: i64,
    pub mode: crate::model::Mode,
    pub states: Vec<StateKind>,
    pub social_slot: StateKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ListViolation {
    #[error("list has {0} states, expected 2 to 5")]
    Size(usize),
    #[error("list has {0} social states, expected exactly 1")]
    SocialCount(usize),
    #[error("state {0} appears more than once")]
    Duplicate(StateKind),
    #[error("social slot {0} is not in the list")]
    SlotMismatch(StateKind),
}

impl StateList {
    pub fn contains(&self, state: StateKind) -> bool {
        self.states.contains(&state)
    }

    pub fn non_social(&self) -> impl Iterator<Item = StateKind> + '_ {
        self.states.iter().copied().filter(|s| !s.is_social())
    }

    /// Checks size, social-slot and uniqueness rules.
    pub fn check(&self) -> Result<(), ListViolation> {
        let n = self.states.len();
        if !(2..=5).contains(&n) {
            return Err(ListViolation::Size(n));
        }
        let social = self.states.iter().filter(|s| s.is_social()).count();
        if social != 1 {
            return Err(ListViolation::SocialCount(social));
        }
        for (i, s) in self.states.iter().enumerate() {
            if self.states[..i].contains(s) {
                return Err(ListViolation::Duplicate(*s));
            }
        }
        if !self.contains(self.social_slot) {
            return Err(ListViolation::SlotMismatch(self.social_slot));
        }
        Ok(())
    }
}

fn in_table_order(mut states: Vec<StateKind>) -> Vec<StateKind> {
    states.sort();
    states.dedup();
    states
}

pub fn emotion_candidates(arousal: ArousalLevel, config: &SensingConfig) -> Vec<StateKind> {
    in_table_order(config.quadrants.get(arousal).to_vec())
}

pub fn activity_candidates(window: &SensorWindow<'_>, arousal: ArousalLevel, config: &SensingConfig) -> Vec<StateKind> {
    use ArousalLevel::*;
    let minute = window.local_minute();
    let mut out = Vec::new();
    if config.meal_windows.iter().any(|w| w.contains(minute)) && matches!(arousal, Neutral | High) {
        out.push(StateKind::Eating);
    }
    if config.sleep_window.contains(minute) && matches!(arousal, Low | Neutral) {
        out.push(StateKind::Sleeping);
    }
    match window.motion {
        MotionLabel::Walking => out.push(StateKind::Walking),
        MotionLabel::Running => out.push(StateKind::Running),
        MotionLabel::Stationary | MotionLabel::Unknown => {}
    }
    if matches!(arousal, High | VeryHigh) {
        out.push(StateKind::Exercise);
    }
    in_table_order(out)
}

/// The greeting/affection state offered in `window_id`.
pub fn rotate_social(window_id: i64, user_seed: u64) -> StateKind {
    let mut rng = rng::stream(user_seed, "social", &[window_id as u64]);
    StateKind::SOCIAL[rng.gen_range(0..StateKind::SOCIAL.len())]
}

/// Sensed list: activities, then emotions, capped, plus the rotating social state.
pub fn sensed_list(window: &SensorWindow<'_>, window_id: i64, seed: u64, config: &SensingConfig) -> StateList {
    let (arousal, _) = window.arousal(config);
    let mut states = activity_candidates(window, arousal, config);
    states.extend(emotion_candidates(arousal, config));
    if states.is_empty() {
        states.push(StateKind::Neutral);
    }
    states.truncate(config.max_sensed);
    let social = rotate_social(window_id, seed);
    states.push(social);
    StateList {
        window_id,
        mode: crate::model::Mode::SensingOn,
        states,
        social_slot: social,
    }
}

/// Random list: size uniform in 2..=5, one social state, the rest drawn
/// without replacement from the 12 non-social states.
pub fn random_list(window_id: i64, seed: u64) -> StateList {
    let pool: Vec<StateKind> = StateKind::non_social().collect();
    let mut rng = rng::stream(seed, "random_list", &[window_id as u64]);
    let size = rng.gen_range(2..=5usize);
    let social = rotate_social(window_id, seed);
    let mut states: Vec<StateKind> = index::sample(&mut rng, pool.len(), size - 1)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    states.push(social);
    StateList {
        window_id,
        mode: crate::model::Mode::SensingOff,
        states,
        social_slot: social,
    }
}
