//! Reference versions of the sensing rules, used by the verifier and the
//! acceptance suite. Nothing here calls the engine's sensing code; it works
//! from raw seconds and the configuration values.

use otterlink_core::{ArousalLevel, DailySpan, MotionLabel, Profile, ReactKind, SensingConfig, StateKind};

/// Catalog order.
pub const TABLE: [StateKind; 15] = {
    use StateKind::*;
    [
        Excited,
        Calm,
        Angry,
        Sad,
        Surprised,
        Bored,
        Neutral,
        Eating,
        Sleeping,
        Walking,
        Running,
        Exercise,
        Waving,
        Hugging,
        Handholding,
    ]
};

pub const EMOTIONS: [StateKind; 7] = {
    use StateKind::*;
    [Excited, Calm, Angry, Sad, Surprised, Bored, Neutral]
};

pub const ACTIVITIES: [StateKind; 5] = {
    use StateKind::*;
    [Eating, Sleeping, Walking, Running, Exercise]
};

pub const SOCIAL: [StateKind; 3] = [StateKind::Waving, StateKind::Hugging, StateKind::Handholding];

pub const QUICK: [ReactKind; 4] = [
    ReactKind::Love,
    ReactKind::Nodding,
    ReactKind::Handholding,
    ReactKind::Hugging,
];

pub fn is_social(s: StateKind) -> bool {
    SOCIAL.contains(&s)
}

const LEVELS: [ArousalLevel; 4] = [
    ArousalLevel::Low,
    ArousalLevel::Neutral,
    ArousalLevel::High,
    ArousalLevel::VeryHigh,
];

/// Lower boundaries of Neutral, High and Very high.
pub fn bands(p: &Profile, kappa: f64, epsilon: f64) -> [f64; 3] {
    let wanted = [
        p.resting_hr,
        p.walking_hr,
        p.walking_hr + kappa * (p.max_hr - p.walking_hr),
    ];
    let mut out = [0.0; 3];
    let mut below = p.min_hr;
    for i in 0..3 {
        out[i] = if wanted[i] > below { wanted[i] } else { below + epsilon };
        below = out[i];
    }
    out
}

/// Every level whose half-open interval holds `bpm`. A sound partition yields
/// exactly one.
pub fn memberships(bpm: f64, b: [f64; 3]) -> Vec<ArousalLevel> {
    let edges = [f64::NEG_INFINITY, b[0], b[1], b[2], f64::INFINITY];
    (0..4)
        .filter(|&i| edges[i] <= bpm && bpm < edges[i + 1])
        .map(|i| LEVELS[i])
        .collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(v[n / 2]),
        _ => Some(0.5 * (v[n / 2 - 1] + v[n / 2])),
    }
}

pub fn local_minute(t: i64, tz_mins: i32) -> u32 {
    ((t + 60 * tz_mins as i64).rem_euclid(86_400) / 60) as u32
}

pub fn local_day(t: i64, tz_mins: i32) -> i64 {
    (t + 60 * tz_mins as i64).div_euclid(86_400)
}

/// Whether `minute` falls in the span, which may run past midnight.
pub fn in_span(minute: u32, span: DailySpan) -> bool {
    let (a, b) = (span.start, span.end);
    let len = (b + 1440 - a) % 1440;
    (minute + 1440 - a) % 1440 < len
}

/// What the sensors said at a window start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Context {
    pub arousal: ArousalLevel,
    pub motion: MotionLabel,
    pub minute: u32,
}

/// Raw sensor history of one person, in arrival order.
#[derive(Debug, Clone, Default)]
pub struct Signals {
    pub hr: Vec<(i64, f64)>,
    pub motion: Vec<(i64, MotionLabel)>,
    pub profiles: Vec<(i64, Profile)>,
}

impl Signals {
    /// Context for a window opening at `ws`, from data that arrived strictly
    /// before it.
    pub fn context(&self, ws: i64, tz_mins: i32, cfg: &SensingConfig) -> Context {
        let horizon = ws - 60 * cfg.thresholds.staleness_mins;
        let lo = self.hr.partition_point(|(t, _)| *t < horizon);
        let hi = self.hr.partition_point(|(t, _)| *t < ws);
        let recent: Vec<f64> = self.hr[lo..hi].iter().map(|(_, b)| *b).collect();
        let today = local_day(ws, tz_mins);
        let mut profile: Option<&Profile> = None;
        for (t, p) in &self.profiles {
            if *t >= ws {
                break;
            }
            if p.day <= today && profile.is_none_or(|q| p.day >= q.day) {
                profile = Some(p);
            }
        }
        let arousal = match (median(&recent), profile) {
            (Some(bpm), Some(p)) => {
                let m = memberships(bpm, bands(p, cfg.thresholds.kappa, cfg.thresholds.epsilon));
                assert_eq!(m.len(), 1, "bands overlap at {bpm}");
                m[0]
            }
            _ => ArousalLevel::Neutral,
        };
        let motion = self
            .motion
            .iter()
            .take_while(|(t, _)| *t < ws)
            .last()
            .map_or(MotionLabel::Unknown, |(_, m)| *m);
        Context {
            arousal,
            motion,
            minute: local_minute(ws, tz_mins),
        }
    }
}

/// Whether the sensors support offering `state`. Social states always pass;
/// Neutral also passes as the fallback when nothing else does.
pub fn supports(state: StateKind, c: &Context, cfg: &SensingConfig) -> bool {
    use ArousalLevel as A;
    match state {
        StateKind::Waving | StateKind::Hugging | StateKind::Handholding => true,
        StateKind::Eating => {
            cfg.meal_windows.iter().any(|w| in_span(c.minute, *w)) && matches!(c.arousal, A::Neutral | A::High)
        }
        StateKind::Sleeping => in_span(c.minute, cfg.sleep_window) && matches!(c.arousal, A::Low | A::Neutral),
        StateKind::Walking => c.motion == MotionLabel::Walking,
        StateKind::Running => c.motion == MotionLabel::Running,
        StateKind::Exercise => matches!(c.arousal, A::High | A::VeryHigh),
        emotion => {
            let quadrant = match c.arousal {
                A::Low => &cfg.quadrants.low,
                A::Neutral => &cfg.quadrants.neutral,
                A::High => &cfg.quadrants.high,
                A::VeryHigh => &cfg.quadrants.very_high,
            };
            quadrant.contains(&emotion) || (emotion == StateKind::Neutral && sensed(c, cfg).contains(&emotion))
        }
    }
}

/// The non-social part of a sensed list: supported activities, then
/// supported emotions, each in catalog order, capped; Neutral if empty.
pub fn sensed(c: &Context, cfg: &SensingConfig) -> Vec<StateKind> {
    let mut out: Vec<StateKind> = ACTIVITIES.iter().copied().filter(|s| supports(*s, c, cfg)).collect();
    let quadrant = match c.arousal {
        ArousalLevel::Low => &cfg.quadrants.low,
        ArousalLevel::Neutral => &cfg.quadrants.neutral,
        ArousalLevel::High => &cfg.quadrants.high,
        ArousalLevel::VeryHigh => &cfg.quadrants.very_high,
    };
    out.extend(EMOTIONS.iter().copied().filter(|s| quadrant.contains(s)));
    if out.is_empty() {
        out.push(StateKind::Neutral);
    }
    out.truncate(cfg.max_sensed);
    out
}
