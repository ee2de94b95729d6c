//! Synthetic sensor traces from a daily activity plan.

use std::io::{self, BufRead, Write};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use otterlink_core::rng;
use otterlink_core::time::MINS_PER_DAY;
use otterlink_core::{DailySpan, MotionLabel, Profile, Timestamp, TraceEvent, TzOffset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Sleep,
    Sedentary,
    Walk,
    Run,
    Workout,
    Meal,
}

impl Activity {
    pub fn motion(self) -> MotionLabel {
        match self {
            Activity::Walk => MotionLabel::Walking,
            Activity::Run => MotionLabel::Running,
            Activity::Sleep | Activity::Sedentary | Activity::Workout | Activity::Meal => MotionLabel::Stationary,
        }
    }

    /// Heart rate the segment's samples are drawn around.
    pub fn anchor(self, p: &ProfileAnchors) -> f64 {
        match self {
            Activity::Sleep => p.min_hr,
            Activity::Sedentary => p.resting_hr + 0.25 * (p.walking_hr - p.resting_hr),
            Activity::Meal => p.resting_hr + 0.5 * (p.walking_hr - p.resting_hr),
            Activity::Walk => p.walking_hr,
            Activity::Run => p.walking_hr + 0.6 * (p.max_hr - p.walking_hr),
            Activity::Workout => p.walking_hr + 0.75 * (p.max_hr - p.walking_hr),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanSegment {
    pub activity: Activity,
    pub span: DailySpan,
}

impl PlanSegment {
    pub fn new(activity: Activity, span: &str) -> Self {
        PlanSegment {
            activity,
            span: span.parse().expect("valid span literal"),
        }
    }
}

/// A person's heart-rate anchors, stamped onto each simulated day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileAnchors {
    pub min_hr: f64,
    pub resting_hr: f64,
    pub walking_hr: f64,
    pub max_hr: f64,
}

impl Default for ProfileAnchors {
    fn default() -> Self {
        ProfileAnchors {
            min_hr: 50.0,
            resting_hr: 65.0,
            walking_hr: 95.0,
            max_hr: 180.0,
        }
    }
}

impl ProfileAnchors {
    pub fn for_day(&self, day: i64) -> Result<Profile, otterlink_core::model::SampleError> {
        Profile::new(day, self.min_hr, self.resting_hr, self.walking_hr, self.max_hr)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("day plan leaves {:02}:{:02} uncovered", .minute / 60, .minute % 60)]
    PlanGap { minute: u32 },
    #[error("day plan covers minute {minute} more than once")]
    Overlap { minute: u32 },
    #[error("day plan segment {0} is empty")]
    EmptySegment(DailySpan),
}

/// Activity for every minute of the local day.
pub fn resolve(plan: &[PlanSegment]) -> Result<Vec<Activity>, PlanError> {
    let mut day: Vec<Option<Activity>> = vec![None; MINS_PER_DAY as usize];
    for seg in plan {
        if seg.span.start == seg.span.end {
            return Err(PlanError::EmptySegment(seg.span));
        }
        for m in (0..MINS_PER_DAY).filter(|&m| seg.span.contains(m)) {
            if day[m as usize].replace(seg.activity).is_some() {
                return Err(PlanError::Overlap { minute: m });
            }
        }
    }
    day.into_iter()
        .enumerate()
        .map(|(m, a)| a.ok_or(PlanError::PlanGap { minute: m as u32 }))
        .collect()
}

pub fn default_plan() -> Vec<PlanSegment> {
    use Activity::*;
    [
        (Sleep, "23:00-07:00"),
        (Sedentary, "07:00-07:30"),
        (Meal, "07:30-08:00"),
        (Walk, "08:00-08:30"),
        (Sedentary, "08:30-12:00"),
        (Meal, "12:00-12:45"),
        (Sedentary, "12:45-17:30"),
        (Run, "17:30-18:15"),
        (Sedentary, "18:15-18:30"),
        (Meal, "18:30-19:15"),
        (Sedentary, "19:15-20:00"),
        (Workout, "20:00-20:45"),
        (Walk, "20:45-21:15"),
        (Sedentary, "21:15-23:00"),
    ]
    .into_iter()
    .map(|(a, s)| PlanSegment::new(a, s))
    .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSpec {
    pub start: Timestamp,
    pub days: u32,
    pub tz: TzOffset,
    pub noise_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("invalid profile: {0}")]
    Profile(#[from] otterlink_core::model::SampleError),
    #[error("noise sigma must be finite and non-negative, got {0}")]
    Sigma(f64),
}

/// One heart-rate sample per minute from `spec.start` for `spec.days` days,
/// a motion event whenever the label changes, and a profile at the start and
/// at every local midnight.
pub fn generate_trace(
    plan: &[PlanSegment],
    anchors: &ProfileAnchors,
    spec: &TraceSpec,
) -> Result<Vec<TraceEvent>, TraceError> {
    let minutes = resolve(plan)?;
    anchors.for_day(0)?;
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|_| TraceError::Sigma(spec.noise_sigma))?;
    let mut rng = rng::stream(spec.seed, "trace", &[]);
    let mut out = Vec::with_capacity(spec.days as usize * MINS_PER_DAY as usize + 64);
    let mut motion = None;
    for i in 0..spec.days as i64 * MINS_PER_DAY as i64 {
        let t = spec.start.plus_mins(i);
        let minute = t.local_minute_of_day(spec.tz);
        if i == 0 || minute == 0 {
            out.push(TraceEvent::profile(t, anchors.for_day(t.local_day(spec.tz))?));
        }
        let activity = minutes[minute as usize];
        if motion != Some(activity.motion()) {
            motion = Some(activity.motion());
            out.push(TraceEvent::motion(t, activity.motion()));
        }
        let bpm = activity.anchor(anchors) + noise.sample(&mut rng);
        let bpm = (bpm.clamp(25.0, 245.0) * 10.0).round() / 10.0;
        out.push(TraceEvent::hr(t, bpm));
    }
    Ok(out)
}

pub fn write_trace<W: Write>(events: &[TraceEvent], mut w: W) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[derive(Debug, Error)]
pub enum TraceFileError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("line {line}: timestamp goes backwards")]
    Unordered { line: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<TraceEvent>, TraceFileError> {
    let mut out: Vec<TraceEvent> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: TraceEvent =
            serde_json::from_str(&line).map_err(|source| TraceFileError::Parse { line: i + 1, source })?;
        if out.last().is_some_and(|p| e.t < p.t) {
            return Err(TraceFileError::Unordered { line: i + 1 });
        }
        out.push(e);
    }
    Ok(out)
}
