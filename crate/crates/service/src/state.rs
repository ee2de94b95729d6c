//! The complete, serializable service state and the deterministic
//! application of requests to it.
//!
//! `apply` either fails without touching state or succeeds and mutates it;
//! replaying the same accepted requests at the same instants rebuilds an
//! equal state.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use otterlink_core::notifier::{self, Notification};
use otterlink_core::sensing::{random_list, sensed_list};
use otterlink_core::time::window_start;
use otterlink_core::{
    rng, InteractionSession, MessageId, Mode, PairId, SchedulerState, SensorBuffer, ShareSource, StateKind, StateList,
    Timestamp, TzOffset, UserId,
};

use crate::config::ServiceConfig;
use crate::error::ServiceError;
use crate::protocol::{Request, ShareOrigin};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub id: UserId,
    pub name: String,
    pub token: String,
    pub tz: TzOffset,
    pub seed: u64,
    pub pair: Option<PairId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMember {
    pub user: UserId,
    pub tz: TzOffset,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeChange {
    /// First window the new mode applies to.
    pub from_window: i64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: PairId,
    pub members: [PairMember; 2],
    /// Most recently configured mode.
    pub mode: Mode,
    pub created_at: Timestamp,
    pub mode_changes: Vec<ModeChange>,
}

impl PairRecord {
    /// Mode governing list generation in `window_id`.
    pub fn mode_at(&self, window_id: i64) -> Mode {
        self.mode_changes
            .iter()
            .rev()
            .find(|c| c.from_window <= window_id)
            .or_else(|| self.mode_changes.first())
            .map(|c| c.mode)
            .unwrap_or(self.mode)
    }

    pub fn users(&self) -> [UserId; 2] {
        [self.members[0].user, self.members[1].user]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingSuggestion {
    pub state: StateKind,
    pub window_id: i64,
    pub created_at: Timestamp,
}

/// Something pushed to a user outside the request/reply flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Event {
    Notification(Notification),
    Paired(PairRecord),
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Notification(_) => crate::protocol::kinds::NOTIFICATION,
            Event::Paired(_) => crate::protocol::kinds::PAIR,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Push {
    pub to: UserId,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub reply: Value,
    pub pushes: Vec<Push>,
    /// False when the request turned out to be a no-op (an idle tick).
    pub changed: bool,
}

impl Applied {
    fn reply(reply: Value) -> Self {
        Applied {
            reply,
            pushes: Vec::new(),
            changed: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceState {
    seed: u64,
    next_user: u64,
    next_pair: u64,
    next_message: u64,
    users: BTreeMap<UserId, UserRecord>,
    pairs: BTreeMap<PairId, PairRecord>,
    sessions: BTreeMap<PairId, InteractionSession>,
    sensors: BTreeMap<UserId, SensorBuffer>,
    served: BTreeMap<UserId, StateList>,
    suggestions: BTreeMap<UserId, PendingSuggestion>,
    scheduler: SchedulerState,
}

impl ServiceState {
    pub fn new(seed: u64) -> Self {
        ServiceState {
            seed,
            next_user: 1,
            next_pair: 1,
            next_message: 1,
            users: BTreeMap::new(),
            pairs: BTreeMap::new(),
            sessions: BTreeMap::new(),
            sensors: BTreeMap::new(),
            served: BTreeMap::new(),
            suggestions: BTreeMap::new(),
            scheduler: SchedulerState::new(rng::mix(seed, &[rng::domain("scheduler")])),
        }
    }

    pub fn user(&self, id: UserId) -> Option<&UserRecord> {
        self.users.get(&id)
    }

    pub fn users(&self) -> impl Iterator<Item = &UserRecord> {
        self.users.values()
    }

    pub fn user_by_token(&self, token: &str) -> Option<UserId> {
        self.users.values().find(|u| u.token == token).map(|u| u.id)
    }

    pub fn pair(&self, id: PairId) -> Option<&PairRecord> {
        self.pairs.get(&id)
    }

    pub fn pairs(&self) -> impl Iterator<Item = &PairRecord> {
        self.pairs.values()
    }

    pub fn session(&self, id: PairId) -> Option<&InteractionSession> {
        self.sessions.get(&id)
    }

    pub fn served_list(&self, user: UserId) -> Option<&StateList> {
        self.served.get(&user)
    }

    pub fn pending_suggestion(&self, user: UserId) -> Option<&PendingSuggestion> {
        self.suggestions.get(&user)
    }

    pub fn sensors(&self, user: UserId) -> Option<&SensorBuffer> {
        self.sensors.get(&user)
    }

    fn require_user(&self, user: Option<UserId>) -> Result<&UserRecord, ServiceError> {
        let id = user.ok_or(ServiceError::Unauthorized)?;
        self.users.get(&id).ok_or(ServiceError::UnknownUser(id))
    }

    fn paired(&self, user: Option<UserId>) -> Result<(UserId, PairId), ServiceError> {
        let u = self.require_user(user)?;
        let pair = u.pair.ok_or(ServiceError::NotPaired(u.id))?;
        Ok((u.id, pair))
    }

    fn next_message_id(&mut self) -> MessageId {
        let id = MessageId(self.next_message);
        self.next_message += 1;
        id
    }

    /// The list `user` sees in the window containing `now`, computing and
    /// freezing it on first request.
    fn current_list(&mut self, user: UserId, pair: PairId, now: Timestamp, cfg: &ServiceConfig) -> StateList {
        let window = now.window_id();
        if let Some(list) = self.served.get(&user) {
            if list.window_id == window {
                return list.clone();
            }
        }
        let record = &self.users[&user];
        let (seed, tz) = (record.seed, record.tz);
        let list = match self.pairs[&pair].mode_at(window) {
            Mode::SensingOff => random_list(window, seed),
            Mode::SensingOn => {
                let empty = SensorBuffer::new();
                let buffer = self.sensors.get(&user).unwrap_or(&empty);
                let view = buffer.window_at(window_start(window), tz);
                sensed_list(&view, window, seed, &cfg.sensing)
            }
        };
        self.served.insert(user, list.clone());
        list
    }

    pub fn apply(
        &mut self,
        user: Option<UserId>,
        request: &Request,
        now: Timestamp,
        cfg: &ServiceConfig,
    ) -> Result<Applied, ServiceError> {
        match request {
            Request::Register(body) => {
                let id = UserId(self.next_user);
                self.next_user += 1;
                let token: u128 = rng::stream(self.seed, "token", &[id.0]).gen();
                let record = UserRecord {
                    id,
                    name: body.name.clone(),
                    token: format!("{token:032x}"),
                    tz: TzOffset(body.tz_offset_mins.unwrap_or(cfg.default_tz_offset_mins)),
                    seed: rng::mix(self.seed, &[rng::domain("user"), id.0]),
                    pair: None,
                };
                let reply =
                    json!({ "user": id, "token": record.token, "name": record.name, "tz_offset_mins": record.tz });
                self.users.insert(id, record);
                Ok(Applied::reply(reply))
            }
            Request::Pair(body) => {
                let me = self.require_user(user)?.id;
                let partner = self
                    .users
                    .get(&body.partner)
                    .ok_or(ServiceError::UnknownUser(body.partner))?;
                if partner.id == me {
                    return Err(ServiceError::SelfPair);
                }
                for u in [me, partner.id] {
                    if self.users[&u].pair.is_some() {
                        return Err(ServiceError::AlreadyPaired(u));
                    }
                }
                let id = PairId(self.next_pair);
                self.next_pair += 1;
                let member = |u: &UserRecord| PairMember {
                    user: u.id,
                    tz: u.tz,
                    seed: u.seed,
                };
                let record = PairRecord {
                    id,
                    members: [member(&self.users[&me]), member(&self.users[&body.partner])],
                    mode: cfg.default_mode,
                    created_at: now,
                    mode_changes: vec![ModeChange {
                        from_window: now.window_id(),
                        mode: cfg.default_mode,
                    }],
                };
                for m in record.members {
                    self.users.get_mut(&m.user).expect("checked").pair = Some(id);
                    self.scheduler.arm(m.user, m.tz, now, &cfg.notifier);
                }
                self.sessions.insert(
                    id,
                    InteractionSession::new(id, record.members[0].user, record.members[1].user),
                );
                self.pairs.insert(id, record.clone());
                let reply = serde_json::to_value(&record).expect("serializable");
                let pushes = record
                    .users()
                    .into_iter()
                    .map(|to| Push {
                        to,
                        event: Event::Paired(record.clone()),
                    })
                    .collect();
                Ok(Applied {
                    reply,
                    pushes,
                    changed: true,
                })
            }
            Request::GetStateList => {
                let (me, pair) = self.paired(user)?;
                let list = self.current_list(me, pair, now, cfg);
                Ok(Applied::reply(serde_json::to_value(list).expect("serializable")))
            }
            Request::ShareState(body) => {
                let (me, pair) = self.paired(user)?;
                let id = MessageId(self.next_message);
                let session = self.sessions.get_mut(&pair).expect("pair has a session");
                let msg = match body.origin {
                    ShareOrigin::List => {
                        let list = self
                            .served
                            .get(&me)
                            .filter(|l| l.window_id == now.window_id())
                            .ok_or(otterlink_core::InteractionError::StateNotAvailable(body.state))?;
                        session.share_state(me, body.state, ShareSource::List(list), id, now)?
                    }
                    ShareOrigin::Notification => {
                        let offered = self
                            .suggestions
                            .get(&me)
                            .ok_or(otterlink_core::InteractionError::StateNotAvailable(body.state))?;
                        let source = ShareSource::Suggestion {
                            state: offered.state,
                            window_id: offered.window_id,
                        };
                        let msg = session.share_state(me, body.state, source, id, now)?;
                        self.suggestions.remove(&me);
                        msg
                    }
                };
                self.next_message_id();
                let partner = self.sessions[&pair].partner_of(me)?;
                let note = notifier::on_state_share(&msg, partner).expect("state share");
                Ok(Applied {
                    reply: serde_json::to_value(msg).expect("serializable"),
                    pushes: vec![Push {
                        to: partner,
                        event: Event::Notification(note),
                    }],
                    changed: true,
                })
            }
            Request::ViewState(r) => {
                let (me, pair) = self.paired(user)?;
                let session = self.sessions.get_mut(&pair).expect("pair has a session");
                let prompt = session.view_state(me, r.message)?;
                Ok(Applied::reply(serde_json::to_value(prompt).expect("serializable")))
            }
            Request::SendReact(body) => {
                let (me, pair) = self.paired(user)?;
                let id = MessageId(self.next_message);
                let session = self.sessions.get_mut(&pair).expect("pair has a session");
                let msg = session.send_react(me, body.message, body.react, body.via, id, now)?;
                self.next_message_id();
                let session = &self.sessions[&pair];
                let original = session.message(body.message).expect("referenced share exists");
                let state = original.state().expect("reacts reference states");
                let note = notifier::on_react_share(&msg, original.sender, state).expect("react share");
                Ok(Applied {
                    reply: serde_json::to_value(msg).expect("serializable"),
                    pushes: vec![Push {
                        to: original.sender,
                        event: Event::Notification(note),
                    }],
                    changed: true,
                })
            }
            Request::DontReact(r) => {
                let (me, pair) = self.paired(user)?;
                let session = self.sessions.get_mut(&pair).expect("pair has a session");
                session.dont_react(me, r.message)?;
                Ok(Applied::reply(json!({ "message": r.message, "phase": "dismissed" })))
            }
            Request::ViewReact(r) => {
                let (me, pair) = self.paired(user)?;
                let session = &self.sessions[&pair];
                let (react, state) = session.view_react(me, r.message)?;
                let references = session.message(r.message).and_then(|m| m.react()).map(|(_, id)| id);
                Ok(Applied {
                    reply: json!({ "message": r.message, "react": react, "state": state, "references": references }),
                    pushes: Vec::new(),
                    changed: false,
                })
            }
            Request::SensorEvent(event) => {
                let me = self.require_user(user)?.id;
                self.sensors.entry(me).or_default().check(event)?;
                self.sensors.get_mut(&me).expect("just inserted").ingest(event)?;
                Ok(Applied::reply(json!({ "t": event.t })))
            }
            Request::Tick => {
                let mut pushes = Vec::new();
                let mut deferred = false;
                for me in self.scheduler.due(now) {
                    let Some(pair) = self.users.get(&me).and_then(|u| u.pair) else {
                        continue;
                    };
                    let tz = self.users[&me].tz;
                    if !cfg.notifier.active_hours.contains(now.local_minute_of_day(tz)) {
                        self.scheduler.defer(me, now, &cfg.notifier);
                        deferred = true;
                        continue;
                    }
                    let list = self.current_list(me, pair, now, cfg);
                    let mode = self.pairs[&pair].mode_at(list.window_id);
                    let seed = self.users[&me].seed;
                    let note = notifier::own_state_suggestion(mode, &list, seed, me, now)
                        .expect("every list has a non-social state");
                    if let notifier::NotificationBody::OwnStateSuggestion { state, window_id, .. } = note.body {
                        self.suggestions.insert(
                            me,
                            PendingSuggestion {
                                state,
                                window_id,
                                created_at: now,
                            },
                        );
                    }
                    self.scheduler.fired(me, now, &cfg.notifier);
                    pushes.push(Push {
                        to: me,
                        event: Event::Notification(note),
                    });
                }
                let changed = deferred || !pushes.is_empty();
                Ok(Applied {
                    reply: json!({ "fired": pushes.len() }),
                    pushes,
                    changed,
                })
            }
            Request::SetMode(body) => {
                let pair = self
                    .pairs
                    .get_mut(&body.pair)
                    .ok_or(ServiceError::UnknownPair(body.pair))?;
                let from_window = now.window_id() + 1;
                pair.mode = body.mode;
                pair.mode_changes.retain(|c| c.from_window < from_window);
                pair.mode_changes.push(ModeChange {
                    from_window,
                    mode: body.mode,
                });
                Ok(Applied::reply(serde_json::to_value(&*pair).expect("serializable")))
            }
        }
    }
}
