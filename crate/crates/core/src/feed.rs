//! Per-user sensor history fed by the device (or a trace).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{HeartRateSample, MotionLabel, SampleError};
use crate::sensing::SensorWindow;
use crate::time::{Timestamp, TzOffset};
use crate::trace::{TraceData, TraceEvent};
use crate::{Profile, Sample};

/// How much heart-rate and motion history is retained behind the newest event.
pub const RETAIN_MINS: i64 = 120;
/// Daily profiles kept, counted in arrival order.
pub const RETAIN_PROFILES: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("event at {got} precedes last ingested event at {last}")]
    OutOfOrderEvent { last: Timestamp, got: Timestamp },
    #[error(transparent)]
    Invalid(#[from] SampleError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SensorBuffer {
    samples: Vec<Sample>,
    motion: Vec<(Timestamp, MotionLabel)>,
    profiles: Vec<(Timestamp, Profile)>,
    last: Option<Timestamp>,
}

impl SensorBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_event(&self) -> Option<Timestamp> {
        self.last
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// Validates without mutating, so callers can check before committing.
    pub fn check(&self, event: &TraceEvent) -> Result<(), IngestError> {
        if let Some(last) = self.last {
            if event.t < last {
                return Err(IngestError::OutOfOrderEvent { last, got: event.t });
            }
        }
        match event.data {
            TraceData::Hr { bpm } => {
                HeartRateSample::new(event.t, bpm)?;
            }
            TraceData::Profile(p) => p.validate()?,
            TraceData::Motion { .. } => {}
        }
        Ok(())
    }

    pub fn ingest(&mut self, event: &TraceEvent) -> Result<(), IngestError> {
        self.check(event)?;
        self.last = Some(event.t);
        match event.data {
            TraceData::Hr { bpm } => self.samples.push(HeartRateSample { at: event.t, bpm }),
            TraceData::Motion { label } => self.motion.push((event.t, label)),
            TraceData::Profile(p) => {
                self.profiles.push((event.t, p));
                if self.profiles.len() > RETAIN_PROFILES {
                    self.profiles.remove(0);
                }
            }
        }
        self.prune(event.t);
        Ok(())
    }

    fn prune(&mut self, newest: Timestamp) {
        let cutoff = newest.plus_mins(-RETAIN_MINS);
        let keep_from = self.samples.partition_point(|s| s.at < cutoff);
        if keep_from > 0 {
            self.samples.drain(..keep_from);
        }
        // Keep the last motion label before the cutoff; it is still current.
        let older = self.motion.partition_point(|(t, _)| *t < cutoff);
        if older > 1 {
            self.motion.drain(..older - 1);
        }
    }

    /// Latest motion label strictly before `now`.
    pub fn motion_at(&self, now: Timestamp) -> MotionLabel {
        let idx = self.motion.partition_point(|(t, _)| *t < now);
        idx.checked_sub(1).map(|i| self.motion[i].1).unwrap_or_default()
    }

    /// Among profiles that arrived strictly before `now`, the one for the most
    /// recent local day not after `now`'s. A later arrival for the same day
    /// replaces an earlier one.
    pub fn profile_at(&self, now: Timestamp, tz: TzOffset) -> Option<&Profile> {
        let today = now.local_day(tz);
        let end = self.profiles.partition_point(|(t, _)| *t < now);
        self.profiles[..end]
            .iter()
            .map(|(_, p)| p)
            .filter(|p| p.day <= today)
            .fold(None, |best: Option<&Profile>, p| match best {
                Some(b) if b.day > p.day => Some(b),
                _ => Some(p),
            })
    }

    pub fn window_at(&self, now: Timestamp, tz: TzOffset) -> SensorWindow<'_> {
        let end = self.samples.partition_point(|s| s.at < now);
        SensorWindow {
            samples: &self.samples[..end],
            motion: self.motion_at(now),
            profile: self.profile_at(now, tz),
            now,
            tz,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DailyProfile;

    #[test]
    fn heart_rate_lands_in_buffer() {
        let mut b = SensorBuffer::new();
        b.ingest(&TraceEvent::hr(Timestamp(60), 72.)).unwrap();
        assert_eq!(
            b.samples(),
            &[HeartRateSample {
                at: Timestamp(60),
                bpm: 72.
            }]
        );
    }

    #[test]
    fn out_of_order_rejected_without_change() {
        let mut b = SensorBuffer::new();
        b.ingest(&TraceEvent::hr(Timestamp(120), 72.)).unwrap();
        let before = b.clone();
        let err = b.ingest(&TraceEvent::hr(Timestamp(60), 80.)).unwrap_err();
        assert_eq!(
            err,
            IngestError::OutOfOrderEvent {
                last: Timestamp(120),
                got: Timestamp(60)
            }
        );
        assert_eq!(b, before);
        b.ingest(&TraceEvent::hr(Timestamp(120), 73.)).unwrap();
    }

    #[test]
    fn implausible_bpm_rejected() {
        let mut b = SensorBuffer::new();
        assert!(matches!(
            b.ingest(&TraceEvent::hr(Timestamp(0), 300.)),
            Err(IngestError::Invalid(_))
        ));
        assert_eq!(b.last_event(), None);
    }

    #[test]
    fn daily_profile_becomes_effective_on_its_day() {
        let tz = TzOffset(0);
        let mut b = SensorBuffer::new();
        let p1 = DailyProfile::new(1, 50., 65., 95., 180.).unwrap();
        let p2 = DailyProfile::new(2, 52., 70., 100., 185.).unwrap();
        b.ingest(&TraceEvent::profile(Timestamp::from_local(1, 0, tz), p1))
            .unwrap();
        b.ingest(&TraceEvent::profile(Timestamp::from_local(2, 0, tz), p2))
            .unwrap();
        assert_eq!(b.profile_at(Timestamp::from_local(0, 600, tz), tz), None);
        assert_eq!(b.profile_at(Timestamp::from_local(1, 600, tz), tz), Some(&p1));
        assert_eq!(b.profile_at(Timestamp::from_local(2, 1, tz), tz), Some(&p2));
        assert_eq!(b.profile_at(Timestamp::from_local(9, 1, tz), tz), Some(&p2));
        // Arrival at midnight is not yet visible at midnight itself.
        assert_eq!(b.profile_at(Timestamp::from_local(2, 0, tz), tz), Some(&p1));
    }

    #[test]
    fn same_day_profile_is_replaced_only_after_arrival() {
        let tz = TzOffset(0);
        let mut b = SensorBuffer::new();
        let early = DailyProfile::new(1, 50., 65., 95., 180.).unwrap();
        let late = DailyProfile::new(1, 50., 60., 90., 170.).unwrap();
        b.ingest(&TraceEvent::profile(Timestamp::from_local(1, 0, tz), early))
            .unwrap();
        b.ingest(&TraceEvent::profile(Timestamp::from_local(1, 300, tz), late))
            .unwrap();
        assert_eq!(b.profile_at(Timestamp::from_local(1, 300, tz), tz), Some(&early));
        assert_eq!(b.profile_at(Timestamp::from_local(1, 301, tz), tz), Some(&late));
    }

    #[test]
    fn motion_and_pruning() {
        let mut b = SensorBuffer::new();
        b.ingest(&TraceEvent::motion(Timestamp(0), MotionLabel::Walking))
            .unwrap();
        for m in 1..=300 {
            b.ingest(&TraceEvent::hr(Timestamp(m * 60), 80.)).unwrap();
        }
        assert_eq!(b.samples().len() as i64, RETAIN_MINS + 1);
        assert_eq!(b.motion_at(Timestamp(300 * 60)), MotionLabel::Walking);
        assert_eq!(b.motion_at(Timestamp(0)), MotionLabel::Unknown);
        let w = b.window_at(Timestamp(300 * 60), TzOffset(0));
        assert!(w.samples.iter().all(|s| s.at < Timestamp(300 * 60)));
    }
}
