//! Shared domain vocabulary: states, reacts, arousal, sensor samples,
//! identities and the messages exchanged inside a pair.

use std::fmt;
use std::str::FromStr;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::Timestamp;

/// Error for a canonical name that does not match any enumeration member.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {what} {name:?}")]
pub struct UnknownName {
    pub what: &'static str,
    pub name: String,
}

macro_rules! canonical_enum {
    (
        $(#[$meta:meta])*
        $vis:vis enum $name:ident as $what:literal {
            $( $(#[$vmeta:meta])* $variant:ident => $text:literal ),+ $(,)?
        }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        $vis enum $name {
            $( $(#[$vmeta])* #[serde(rename = $text)] $variant ),+
        }

        impl $name {
            /// Every member, in canonical listing order.
            pub const ALL: &'static [$name] = &[ $( $name::$variant ),+ ];

            /// Canonical lower_snake_case wire name.
            pub const fn as_str(self) -> &'static str {
                match self {
                    $( $name::$variant => $text ),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = UnknownName;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $( $text => Ok($name::$variant), )+
                    _ => Err(UnknownName { what: $what, name: s.to_owned() }),
                }
            }
        }
    };
}

canonical_enum! {
    /// Motion class reported by the device feed.
    #[derive(Default)]
    pub enum MotionLabel as "motion label" {
        Stationary => "stationary",
        Walking => "walking",
        Running => "running",
        #[default]
        Unknown => "unknown",
    }
}

canonical_enum! {
    /// Heart-rate arousal band, ordered from lowest to highest.
    pub enum ArousalLevel as "arousal level" {
        Low => "low",
        Neutral => "neutral",
        High => "high",
        VeryHigh => "very_high",
    }
}

canonical_enum! {
    pub enum StateFamily as "state family" {
        Emotions => "emotions",
        Activities => "activities",
        Greetings => "greetings",
        Affection => "affection",
    }
}

canonical_enum! {
    /// A sendable state. Declaration order follows the state table, family by
    /// family, and is the tie-break order used when lists are truncated.
    pub enum StateKind as "state" {
        Excited => "excited",
        Calm => "calm",
        Angry => "angry",
        Sad => "sad",
        Surprised => "surprised",
        Bored => "bored",
        Neutral => "neutral",
        Eating => "eating",
        Sleeping => "sleeping",
        Walking => "walking",
        Running => "running",
        Exercise => "exercise",
        Waving => "waving",
        Hugging => "hugging",
        Handholding => "handholding",
    }
}

impl StateKind {
    /// The three greeting/affection states that rotate through every list.
    pub const SOCIAL: [StateKind; 3] = [StateKind::Waving, StateKind::Hugging, StateKind::Handholding];

    pub const fn family(self) -> StateFamily {
        use StateKind::*;
        match self {
            Excited | Calm | Angry | Sad | Surprised | Bored | Neutral => StateFamily::Emotions,
            Eating | Sleeping | Walking | Running | Exercise => StateFamily::Activities,
            Waving => StateFamily::Greetings,
            Hugging | Handholding => StateFamily::Affection,
        }
    }

    /// Greetings and affection states are never sensed.
    pub const fn is_social(self) -> bool {
        matches!(self.family(), StateFamily::Greetings | StateFamily::Affection)
    }

    pub fn non_social() -> impl Iterator<Item = StateKind> {
        StateKind::ALL.iter().copied().filter(|s| !s.is_social())
    }
}

pub fn family_of(state: StateKind) -> StateFamily {
    state.family()
}

pub fn is_social(state: StateKind) -> bool {
    state.is_social()
}

canonical_enum! {
    pub enum ReactFamily as "react family" {
        Emotions => "emotions",
        Acknowledgement => "acknowledgement",
        Caring => "caring",
        FollowUp => "follow_up",
    }
}

canonical_enum! {
    /// A response to a received state, in react-table order.
    pub enum ReactKind as "react" {
        Excited => "excited",
        Calm => "calm",
        Angry => "angry",
        Sad => "sad",
        Surprised => "surprised",
        Bored => "bored",
        ThumbsUp => "thumbs_up",
        Nodding => "nodding",
        Hugging => "hugging",
        Handholding => "handholding",
        Love => "love",
        PatOnTheBack => "pat_on_the_back",
        Question => "question",
        CallMe => "call_me",
    }
}

impl ReactKind {
    /// Reacts offered directly on a partner-state notification, in button order.
    pub const QUICK: [ReactKind; 4] = [
        ReactKind::Love,
        ReactKind::Nodding,
        ReactKind::Handholding,
        ReactKind::Hugging,
    ];

    pub const fn family(self) -> ReactFamily {
        use ReactKind::*;
        match self {
            Excited | Calm | Angry | Sad | Surprised | Bored => ReactFamily::Emotions,
            ThumbsUp | Nodding => ReactFamily::Acknowledgement,
            Hugging | Handholding | Love | PatOnTheBack => ReactFamily::Caring,
            Question | CallMe => ReactFamily::FollowUp,
        }
    }

    pub fn is_quick(self) -> bool {
        ReactKind::QUICK.contains(&self)
    }
}

canonical_enum! {
    /// Whether a pair's state lists are sensed or randomized.
    pub enum Mode as "mode" {
        SensingOff => "sensing_off",
        SensingOn => "sensing_on",
    }
}

impl Mode {
    /// Accepts the short CLI spellings `off`/`on` as well as canonical names.
    pub fn parse_loose(s: &str) -> Result<Mode, UnknownName> {
        match s {
            "off" => Ok(Mode::SensingOff),
            "on" => Ok(Mode::SensingOn),
            other => other.parse(),
        }
    }
}

canonical_enum! {
    /// How a message came to be sent.
    pub enum Provenance as "provenance" {
        SensedList => "sensed_list",
        RandomList => "random_list",
        NotificationShare => "notification_share",
        QuickReact => "quick_react",
        InAppReact => "in_app_react",
    }
}

canonical_enum! {
    /// Where a react was sent from.
    pub enum ReactVia as "react route" {
        InApp => "in_app",
        Quick => "quick",
    }
}

impl ReactVia {
    pub const fn provenance(self) -> Provenance {
        match self {
            ReactVia::InApp => Provenance::InAppReact,
            ReactVia::Quick => Provenance::QuickReact,
        }
    }
}

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_newtype!(UserId, "u");
id_newtype!(PairId, "p");
id_newtype!(
    /// Unique across the whole service, not just one pair.
    MessageId,
    "m"
);

/// Bounds on a physiologically plausible heart rate, exclusive.
pub const MIN_BPM: f64 = 20.0;
pub const MAX_BPM: f64 = 250.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("heart rate {0} bpm outside (20, 250)")]
    BpmOutOfRange(f64),
    #[error("profile anchors must satisfy 20 < min <= resting <= walking <= max < 250, got {0}")]
    InvalidProfile(String),
}

fn in_bpm_range<T: Float>(bpm: T) -> bool {
    let lo = T::from(MIN_BPM).expect("bound fits scalar");
    let hi = T::from(MAX_BPM).expect("bound fits scalar");
    bpm > lo && bpm < hi
}

/// One heart-rate reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeartRateSample<T> {
    pub at: Timestamp,
    pub bpm: T,
}

impl<T: Float> HeartRateSample<T> {
    pub fn new(at: Timestamp, bpm: T) -> Result<Self, SampleError> {
        if !in_bpm_range(bpm) {
            return Err(SampleError::BpmOutOfRange(bpm.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(HeartRateSample { at, bpm })
    }
}

/// Per-user heart-rate anchors for one local calendar day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyProfile<T> {
    /// Local day, as days since 1970-01-01.
    pub day: i64,
    pub min_hr: T,
    pub resting_hr: T,
    pub walking_hr: T,
    pub max_hr: T,
}

impl<T: Float + fmt::Debug> DailyProfile<T> {
    pub fn new(day: i64, min_hr: T, resting_hr: T, walking_hr: T, max_hr: T) -> Result<Self, SampleError> {
        let p = DailyProfile {
            day,
            min_hr,
            resting_hr,
            walking_hr,
            max_hr,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SampleError> {
        let ordered =
            self.min_hr <= self.resting_hr && self.resting_hr <= self.walking_hr && self.walking_hr <= self.max_hr;
        if ordered && in_bpm_range(self.min_hr) && in_bpm_range(self.max_hr) {
            Ok(())
        } else {
            Err(SampleError::InvalidProfile(format!(
                "min {:?}, resting {:?}, walking {:?}, max {:?}",
                self.min_hr, self.resting_hr, self.walking_hr, self.max_hr
            )))
        }
    }
}

/// Content of an [`OtterMessage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MessageBody {
    StateShare {
        state: StateKind,
        /// Window of the list (or suggestion) the state was chosen from.
        window_id: i64,
    },
    ReactShare {
        react: ReactKind,
        references: MessageId,
    },
}

/// A state or react sent from one partner to the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OtterMessage {
    pub id: MessageId,
    pub pair: PairId,
    pub sender: UserId,
    #[serde(flatten)]
    pub body: MessageBody,
    pub sent_at: Timestamp,
    pub provenance: Provenance,
}

impl OtterMessage {
    pub fn is_state_share(&self) -> bool {
        matches!(self.body, MessageBody::StateShare { .. })
    }

    pub fn state(&self) -> Option<StateKind> {
        match self.body {
            MessageBody::StateShare { state, .. } => Some(state),
            MessageBody::ReactShare { .. } => None,
        }
    }

    pub fn react(&self) -> Option<(ReactKind, MessageId)> {
        match self.body {
            MessageBody::ReactShare { react, references } => Some((react, references)),
            MessageBody::StateShare { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinalities() {
        assert_eq!(StateKind::ALL.len(), 15);
        assert_eq!(ReactKind::ALL.len(), 14);
        assert_eq!(ReactKind::QUICK.len(), 4);
        assert_eq!(StateKind::non_social().count(), 12);
    }

    #[test]
    fn family_sizes_sum_to_fifteen() {
        let count = |f: StateFamily| StateKind::ALL.iter().filter(|s| s.family() == f).count();
        assert_eq!(count(StateFamily::Emotions), 7);
        assert_eq!(count(StateFamily::Activities), 5);
        assert_eq!(count(StateFamily::Greetings), 1);
        assert_eq!(count(StateFamily::Affection), 2);
    }

    #[test]
    fn families() {
        assert_eq!(family_of(StateKind::Excited), StateFamily::Emotions);
        assert_eq!(family_of(StateKind::Waving), StateFamily::Greetings);
        assert_eq!(family_of(StateKind::Handholding), StateFamily::Affection);
        assert!(is_social(StateKind::Waving));
        assert!(is_social(StateKind::Hugging));
        assert!(!is_social(StateKind::Eating));
        assert_eq!(ReactKind::PatOnTheBack.family(), ReactFamily::Caring);
        assert_eq!(ReactKind::CallMe.family(), ReactFamily::FollowUp);
    }

    #[test]
    fn canonical_names_round_trip() {
        for s in StateKind::ALL {
            assert_eq!(s.as_str().parse::<StateKind>().unwrap(), *s);
            assert_eq!(serde_json::to_string(s).unwrap(), format!("\"{}\"", s.as_str()));
        }
        for r in ReactKind::ALL {
            assert_eq!(r.as_str().parse::<ReactKind>().unwrap(), *r);
        }
        assert_eq!(ArousalLevel::VeryHigh.as_str(), "very_high");
        assert!("hug".parse::<StateKind>().is_err());
        assert_eq!(Mode::parse_loose("on").unwrap(), Mode::SensingOn);
        assert_eq!(Mode::parse_loose("sensing_off").unwrap(), Mode::SensingOff);
    }

    #[test]
    fn arousal_is_totally_ordered() {
        use ArousalLevel::*;
        assert!(Low < Neutral && Neutral < High && High < VeryHigh);
    }

    #[test]
    fn sample_bounds() {
        assert!(HeartRateSample::new(Timestamp(0), 72.0).is_ok());
        assert!(HeartRateSample::new(Timestamp(0), 20.0).is_err());
        assert!(HeartRateSample::new(Timestamp(0), 250.0f32).is_err());
        assert!(HeartRateSample::new(Timestamp(0), f64::NAN).is_err());
    }

    #[test]
    fn profile_ordering() {
        assert!(DailyProfile::new(0, 50.0, 65.0, 95.0, 180.0).is_ok());
        assert!(DailyProfile::new(0, 60.0, 60.0, 60.0, 60.0).is_ok());
        assert!(DailyProfile::new(0, 70.0, 65.0, 95.0, 180.0).is_err());
        assert!(DailyProfile::new(0, 50.0, 65.0, 95.0, 260.0).is_err());
    }

    #[test]
    fn message_wire_shape() {
        let m = OtterMessage {
            id: MessageId(3),
            pair: PairId(1),
            sender: UserId(2),
            body: MessageBody::ReactShare {
                react: ReactKind::ThumbsUp,
                references: MessageId(1),
            },
            sent_at: Timestamp(60),
            provenance: Provenance::InAppReact,
        };
        let json = serde_json::to_value(m).unwrap();
        assert_eq!(json["kind"], "react_share");
        assert_eq!(json["react"], "thumbs_up");
        let back: OtterMessage = serde_json::from_value(json).unwrap();
        assert_eq!(back, m);
    }
}
