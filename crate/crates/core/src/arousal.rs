//! Heart-rate arousal bands derived from a day's profile anchors.
//!
//! Everything here is generic over the scalar so the same band arithmetic
//! serves `f32` device feeds and `f64` simulation alike.

use std::fmt::Debug;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArousalLevel, DailyProfile, HeartRateSample};
use crate::time::Timestamp;

/// Tunables for band construction and sample aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdConfig<T> {
    /// Fraction of the walking-to-max span that sits in the High band.
    pub kappa: T,
    /// Minimum separation forced between coinciding boundaries.
    pub epsilon: T,
    /// Samples older than this are ignored when aggregating.
    pub staleness_mins: i64,
}

impl<T: Float> Default for ThresholdConfig<T> {
    fn default() -> Self {
        ThresholdConfig {
            kappa: T::from(0.5).unwrap(),
            epsilon: T::one(),
            staleness_mins: 15,
        }
    }
}

/// Upper (exclusive) bounds of the Low, Neutral and High bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArousalThresholds<T> {
    pub low_upper: T,
    pub neutral_upper: T,
    pub high_upper: T,
}

/// Returned when the profile anchors coincide. Carries the widened bands,
/// which callers are expected to use after logging.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("degenerate profile: boundaries coincide, widened to {widened:?}")]
pub struct DegenerateProfile<T: Debug> {
    pub widened: ArousalThresholds<T>,
}

impl<T: Float + Debug> ArousalThresholds<T> {
    pub fn is_strictly_increasing(&self) -> bool {
        self.low_upper < self.neutral_upper && self.neutral_upper < self.high_upper
    }

    /// Lower-inclusive band lookup.
    pub fn classify(&self, bpm: T) -> ArousalLevel {
        if bpm < self.low_upper {
            ArousalLevel::Low
        } else if bpm < self.neutral_upper {
            ArousalLevel::Neutral
        } else if bpm < self.high_upper {
            ArousalLevel::High
        } else {
            ArousalLevel::VeryHigh
        }
    }
}

/// Bands anchored at resting, walking, and `walking + kappa * (max - walking)`.
///
/// Each boundary must sit strictly above the one below it (the first one
/// strictly above `min_hr`); any that do not are pushed up by `epsilon` and the
/// widened result is returned inside the error.
pub fn build_thresholds<T: Float + Debug>(
    profile: &DailyProfile<T>,
    config: &ThresholdConfig<T>,
) -> Result<ArousalThresholds<T>, DegenerateProfile<T>> {
    let raw = [
        profile.resting_hr,
        profile.walking_hr,
        profile.walking_hr + config.kappa * (profile.max_hr - profile.walking_hr),
    ];
    let mut bounds = raw;
    let mut floor = profile.min_hr;
    let mut widened = false;
    for b in bounds.iter_mut() {
        if *b <= floor {
            *b = floor + config.epsilon;
            widened = true;
        }
        floor = *b;
    }
    let thresholds = ArousalThresholds {
        low_upper: bounds[0],
        neutral_upper: bounds[1],
        high_upper: bounds[2],
    };
    if widened {
        Err(DegenerateProfile { widened: thresholds })
    } else {
        Ok(thresholds)
    }
}

/// [`build_thresholds`], logging and accepting the widened bands on a
/// degenerate profile.
pub fn thresholds_or_widened<T: Float + Debug>(
    profile: &DailyProfile<T>,
    config: &ThresholdConfig<T>,
) -> ArousalThresholds<T> {
    build_thresholds(profile, config).unwrap_or_else(|e| {
        log::warn!("profile for day {}: {e}", profile.day);
        e.widened
    })
}

pub fn classify_arousal<T: Float + Debug>(bpm: T, thresholds: &ArousalThresholds<T>) -> ArousalLevel {
    thresholds.classify(bpm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no heart-rate sample within the staleness horizon")]
pub struct StaleSignal;

/// Median bpm over samples in `[now - staleness, now)`.
pub fn effective_bpm<T: Float>(
    samples: &[HeartRateSample<T>],
    now: Timestamp,
    config: &ThresholdConfig<T>,
) -> Result<T, StaleSignal> {
    let horizon = now.plus_mins(-config.staleness_mins);
    let mut recent: Vec<T> = samples
        .iter()
        .filter(|s| s.at >= horizon && s.at < now)
        .map(|s| s.bpm)
        .collect();
    median(&mut recent).ok_or(StaleSignal)
}

fn median<T: Float>(values: &mut [T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("bpm values are finite"));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        Some(values[mid])
    } else {
        Some((values[mid - 1] + values[mid]) / T::from(2).unwrap())
    }
}
