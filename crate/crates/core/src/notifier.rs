//! Notifications: partner-state visits, partner reacts and own-state
//! suggestions, plus the per-user suggestion scheduler.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{MessageId, Mode, OtterMessage, ReactKind, StateKind, UserId};
use crate::rng;
use crate::sensing::StateList;
use crate::time::{DailySpan, Timestamp, TzOffset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NotifierConfig {
    /// Floor on the spacing of own-state suggestions.
    pub min_gap_mins: i64,
    /// Upper bound of the uniform delay added on top of the floor.
    pub jitter_mins: i64,
    /// Local hours in which suggestions may fire.
    pub active_hours: DailySpan,
}

impl Default for NotifierConfig {
    fn default() -> Self {
        NotifierConfig {
            min_gap_mins: 45,
            jitter_mins: 45,
            active_hours: DailySpan::hours(8, 22),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionAction {
    Share,
    Dismiss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NotificationBody {
    PartnerStateVisit {
        message: MessageId,
        from: UserId,
        state: StateKind,
        quick_reacts: [ReactKind; 4],
    },
    PartnerReact {
        message: MessageId,
        from: UserId,
        react: ReactKind,
        references: MessageId,
        referenced_state: StateKind,
    },
    OwnStateSuggestion {
        state: StateKind,
        window_id: i64,
        sensed_badge: bool,
        actions: [SuggestionAction; 2],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub recipient: UserId,
    pub created_at: Timestamp,
    #[serde(flatten)]
    pub body: NotificationBody,
}

impl Notification {
    pub fn is_suggestion(&self) -> bool {
        matches!(self.body, NotificationBody::OwnStateSuggestion { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NotifyError {
    #[error("message {0} is not a state share")]
    NotAStateShare(MessageId),
    #[error("message {0} is not a react share")]
    NotAReactShare(MessageId),
    #[error("sensed list for window {0} has no non-social state")]
    EmptyChoiceSet(i64),
}

pub fn on_state_share(msg: &OtterMessage, recipient: UserId) -> Result<Notification, NotifyError> {
    let state = msg.state().ok_or(NotifyError::NotAStateShare(msg.id))?;
    Ok(Notification {
        recipient,
        created_at: msg.sent_at,
        body: NotificationBody::PartnerStateVisit {
            message: msg.id,
            from: msg.sender,
            state,
            quick_reacts: ReactKind::QUICK,
        },
    })
}

/// `recipient` is the sender of the referenced state.
pub fn on_react_share(
    msg: &OtterMessage,
    recipient: UserId,
    referenced_state: StateKind,
) -> Result<Notification, NotifyError> {
    let (react, references) = msg.react().ok_or(NotifyError::NotAReactShare(msg.id))?;
    Ok(Notification {
        recipient,
        created_at: msg.sent_at,
        body: NotificationBody::PartnerReact {
            message: msg.id,
            from: msg.sender,
            react,
            references,
            referenced_state,
        },
    })
}

/// Picks the state an own-state suggestion offers. With sensing on only
/// sensed (non-social) states are eligible and the badge is shown.
pub fn own_state_suggestion(
    mode: Mode,
    list: &StateList,
    seed: u64,
    recipient: UserId,
    now: Timestamp,
) -> Result<Notification, NotifyError> {
    let choices: Vec<StateKind> = match mode {
        Mode::SensingOn => list.non_social().collect(),
        Mode::SensingOff => list.states.clone(),
    };
    if choices.is_empty() {
        return Err(NotifyError::EmptyChoiceSet(list.window_id));
    }
    let mut rng = rng::stream(seed, "suggestion", &[list.window_id as u64]);
    let state = choices[rng.gen_range(0..choices.len())];
    Ok(Notification {
        recipient,
        created_at: now,
        body: NotificationBody::OwnStateSuggestion {
            state,
            window_id: list.window_id,
            sensed_badge: mode == Mode::SensingOn,
            actions: [SuggestionAction::Share, SuggestionAction::Dismiss],
        },
    })
}

/// `max(last + gap, now) + jitter` (whole minutes), deferred to the next start of active hours
/// when it falls outside them. Deterministic in `(seed, last, now)`.
pub fn next_suggestion_time(
    last: Option<Timestamp>,
    now: Timestamp,
    tz: TzOffset,
    seed: u64,
    config: &NotifierConfig,
) -> Timestamp {
    let base = match last {
        Some(last) => now.max(last.plus_mins(config.min_gap_mins)),
        None => now,
    };
    let last_key = last.map_or(u64::MAX, |t| t.unix() as u64);
    let jitter_mins = if config.jitter_mins <= 0 {
        0
    } else {
        rng::stream(seed, "jitter", &[last_key, now.unix() as u64]).gen_range(0..=config.jitter_mins)
    };
    clip_to_active(base.plus_mins(jitter_mins), tz, config.active_hours)
}

fn clip_to_active(t: Timestamp, tz: TzOffset, active: DailySpan) -> Timestamp {
    if active.contains(t.local_minute_of_day(tz)) {
        return t;
    }
    let day = t.local_day(tz);
    let today = Timestamp::from_local(day, active.start, tz);
    if today > t {
        today
    } else {
        Timestamp::from_local(day + 1, active.start, tz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSchedule {
    pub tz: TzOffset,
    pub last: Option<Timestamp>,
    pub next_due: Timestamp,
}

/// One logical suggestion timer per user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerState {
    seed: u64,
    users: BTreeMap<UserId, UserSchedule>,
}

impl SchedulerState {
    pub fn new(seed: u64) -> Self {
        SchedulerState {
            seed,
            users: BTreeMap::new(),
        }
    }

    fn user_seed(&self, user: UserId) -> u64 {
        rng::mix(self.seed, &[user.0])
    }

    pub fn get(&self, user: UserId) -> Option<&UserSchedule> {
        self.users.get(&user)
    }

    /// Starts the timer for `user` if it is not already running.
    pub fn arm(&mut self, user: UserId, tz: TzOffset, now: Timestamp, config: &NotifierConfig) {
        let seed = self.user_seed(user);
        self.users.entry(user).or_insert_with(|| UserSchedule {
            tz,
            last: None,
            next_due: next_suggestion_time(None, now, tz, seed, config),
        });
    }

    pub fn due(&self, now: Timestamp) -> Vec<UserId> {
        self.users
            .iter()
            .filter(|(_, s)| s.next_due <= now)
            .map(|(u, _)| *u)
            .collect()
    }

    /// Moves a timer that came due outside active hours to their next start.
    pub fn defer(&mut self, user: UserId, now: Timestamp, config: &NotifierConfig) {
        if let Some(s) = self.users.get_mut(&user) {
            s.next_due = clip_to_active(now, s.tz, config.active_hours);
        }
    }

    /// Records a suggestion for `user` at `at` and schedules the next one.
    pub fn fired(&mut self, user: UserId, at: Timestamp, config: &NotifierConfig) {
        let seed = self.user_seed(user);
        if let Some(s) = self.users.get_mut(&user) {
            s.last = Some(at);
            s.next_due = next_suggestion_time(Some(at), at, s.tz, seed, config);
        }
    }
}
