//! Offline checker for simulation logs.
//!
//! Walks the log once, rebuilding what each record should look like from the
//! header and the raw sensor records, and reports every rule a record breaks.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;

use otterlink_core::{
    MessageBody, MessageId, Mode, NotificationBody, OtterMessage, Provenance, StateKind, StateList, Timestamp,
    TraceData, UserId,
};

use crate::log::{EventLog, Header, Record};
use crate::oracle::{self, Signals};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Header,
    Chronology,
    ReferentialIntegrity,
    ListLegality,
    WindowStability,
    SensedList,
    GapFloor,
    ActiveHours,
    BadgeRule,
    SuggestionSoundness,
    PredicateSoundness,
    ValidationClosure,
    DeliveryCompleteness,
    Bipartite,
    ReactToReact,
    DoubleReact,
    QuickClosure,
    PhaseDag,
    Conservation,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).expect("rule names serialize");
        f.pad(v.as_str().expect("unit variant"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// Log line, counting from 0.
    pub index: usize,
    pub rule: Rule,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Report {
    pub entries: usize,
    /// How often each rule was evaluated.
    pub checked: BTreeMap<Rule, usize>,
    pub violations: Vec<Violation>,
}

impl Report {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, rule: Rule) -> usize {
        self.violations.iter().filter(|v| v.rule == rule).count()
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} entries, {} violations", self.entries, self.violations.len())?;
        for (rule, n) in &self.checked {
            writeln!(f, "  {rule:<22} checked {n:>7}  violated {}", self.count(*rule))?;
        }
        for v in self.violations.iter().take(50) {
            writeln!(f, "line {}: {}: {}", v.index, v.rule, v.detail)?;
        }
        if self.violations.len() > 50 {
            writeln!(f, "... {} more", self.violations.len() - 50)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Sent,
    Viewed,
    Reacted,
    Dismissed,
}

#[derive(Debug, Clone)]
struct Share {
    sender: UserId,
    state: StateKind,
    phase: Phase,
    notified: usize,
}

#[derive(Debug, Clone)]
struct React {
    msg: OtterMessage,
    original_sender: UserId,
    state: StateKind,
    notified: usize,
}

struct Checker<'a> {
    h: &'a Header,
    report: Report,
    index: usize,
    signals: HashMap<UserId, Signals>,
    mode_changes: Vec<(i64, Mode)>,
    served: HashMap<(UserId, i64), StateList>,
    last_suggestion: HashMap<UserId, Timestamp>,
    pending: HashMap<UserId, (StateKind, i64)>,
    shares: BTreeMap<MessageId, Share>,
    reacts: BTreeMap<MessageId, React>,
    last_at: Timestamp,
}

const WINDOW: i64 = 600;

fn window_of(t: Timestamp) -> i64 {
    t.unix().div_euclid(WINDOW)
}

impl<'a> Checker<'a> {
    fn check(&mut self, rule: Rule, ok: bool, detail: impl FnOnce() -> String) -> bool {
        *self.report.checked.entry(rule).or_default() += 1;
        if !ok {
            self.report.violations.push(Violation {
                index: self.index,
                rule,
                detail: detail(),
            });
        }
        ok
    }

    fn tz(&self, user: UserId) -> Option<i32> {
        self.h.users.iter().find(|u| u.id == user).map(|u| u.tz.0)
    }

    fn partner(&self, user: UserId) -> Option<UserId> {
        self.h.users.iter().map(|u| u.id).find(|&u| u != user)
    }

    fn known(&mut self, user: UserId) -> bool {
        let ok = self.tz(user).is_some();
        self.check(Rule::ReferentialIntegrity, ok, || format!("unknown user {user}"))
    }

    fn mode_at(&self, window: i64) -> Mode {
        self.mode_changes
            .iter()
            .rfind(|(from, _)| *from <= window)
            .map_or(self.h.mode, |(_, m)| *m)
    }

    fn context(&self, user: UserId, window: i64) -> oracle::Context {
        let empty = Signals::default();
        let s = self.signals.get(&user).unwrap_or(&empty);
        s.context(window * WINDOW, self.tz(user).unwrap_or(0), &self.h.sensing)
    }

    fn entry(&mut self, at: Timestamp, record: &Record) {
        let last = self.last_at;
        self.check(Rule::Chronology, at >= last, || format!("at {at} precedes {last}"));
        self.last_at = self.last_at.max(at);
        match record {
            Record::Header(_) => {
                self.check(Rule::Header, false, || "second header".into());
            }
            Record::Sensor { user, input } => self.sensor(at, *user, input),
            Record::ListServed { user, list } => self.list(at, *user, list),
            Record::StateShared { message } => self.state_shared(at, message),
            Record::ReactSent { message } => self.react_sent(at, message),
            Record::Viewed { user, message } => self.advance(*user, *message, "view", Phase::Viewed),
            Record::Dismissed { user, message } => self.advance(*user, *message, "dismiss", Phase::Dismissed),
            Record::ReactViewed {
                user,
                message,
                react,
                state,
            } => {
                let found = self.reacts.get(message).cloned();
                if self.check(Rule::ReferentialIntegrity, found.is_some(), || {
                    format!("no react {message}")
                }) {
                    let r = found.expect("checked");
                    self.check(Rule::Bipartite, r.original_sender == *user, || {
                        format!("{user} viewed react {message} meant for {}", r.original_sender)
                    });
                    let sent = r.msg.react().map(|(k, _)| k);
                    self.check(
                        Rule::DeliveryCompleteness,
                        sent == Some(*react) && r.state == *state,
                        || format!("react {message} viewed as {react:?} on {state:?}"),
                    );
                }
            }
            Record::Notified { notification } | Record::Dropped { notification } => {
                let n = *notification;
                self.check(Rule::Chronology, n.created_at == at, || {
                    format!("notification created at {} logged at {at}", n.created_at)
                });
                if self.known(n.recipient) {
                    self.notification(n.recipient, n.created_at, &n.body);
                }
            }
            Record::SuggestionDismissed { user, .. } => {
                self.known(*user);
            }
            Record::ModeChanged {
                pair,
                mode,
                from_window,
            } => {
                let pair_ok = *pair == self.h.pair;
                self.check(Rule::ReferentialIntegrity, pair_ok, || format!("unknown pair {pair}"));
                self.check(Rule::WindowStability, *from_window == window_of(at) + 1, || {
                    format!("mode change at {at} takes effect from window {from_window}")
                });
                self.mode_changes.retain(|(w, _)| w < from_window);
                self.mode_changes.push((*from_window, *mode));
            }
        }
    }

    fn sensor(&mut self, at: Timestamp, user: UserId, input: &otterlink_core::TraceEvent) {
        if !self.known(user) {
            return;
        }
        let t = input.t.unix();
        let s = self.signals.entry(user).or_default();
        let last = [
            s.hr.last().map(|x| x.0),
            s.motion.last().map(|x| x.0),
            s.profiles.last().map(|x| x.0),
        ]
        .into_iter()
        .flatten()
        .max();
        match input.data {
            TraceData::Hr { bpm } => s.hr.push((t, bpm)),
            TraceData::Motion { label } => s.motion.push((t, label)),
            TraceData::Profile(p) => s.profiles.push((t, p)),
        }
        self.check(Rule::Chronology, input.t <= at && last.is_none_or(|l| l <= t), || {
            format!("sensor event at {t} out of order (logged at {at})")
        });
    }

    fn list(&mut self, at: Timestamp, user: UserId, list: &StateList) {
        if !self.known(user) {
            return;
        }
        let w = window_of(at);
        let socials: Vec<StateKind> = list.states.iter().copied().filter(|s| oracle::is_social(*s)).collect();
        let mut sorted = list.states.clone();
        sorted.sort();
        sorted.dedup();
        let legal = (2..=5).contains(&list.states.len())
            && socials == [list.social_slot]
            && sorted.len() == list.states.len()
            && list.window_id == w
            && list.mode == self.mode_at(w);
        self.check(Rule::ListLegality, legal, || {
            format!("list {:?} served in window {w}", list)
        });
        let previous = self.served.get(&(user, list.window_id)).cloned();
        if let Some(prev) = previous {
            self.check(Rule::WindowStability, prev == *list, || {
                format!(
                    "window {} list changed from {:?} to {:?}",
                    list.window_id, prev.states, list.states
                )
            });
        }
        self.served.insert((user, list.window_id), list.clone());
        if list.mode == Mode::SensingOn {
            let expect = oracle::sensed(&self.context(user, list.window_id), &self.h.sensing);
            let got: Vec<StateKind> = list.states.iter().copied().filter(|s| !oracle::is_social(*s)).collect();
            self.check(Rule::SensedList, got == expect, || {
                format!("sensed {got:?}, expected {expect:?}")
            });
        }
    }

    fn notification(&mut self, to: UserId, at: Timestamp, body: &NotificationBody) {
        match *body {
            NotificationBody::OwnStateSuggestion {
                state,
                window_id,
                sensed_badge,
                ..
            } => {
                let gap = 60 * self.h.notifier.min_gap_mins;
                if let Some(prev) = self.last_suggestion.insert(to, at) {
                    self.check(Rule::GapFloor, at.unix() - prev.unix() >= gap, || {
                        format!("suggestions to {to} at {prev} and {at}")
                    });
                }
                let tz = self.tz(to).unwrap_or(0);
                let minute = oracle::local_minute(at.unix(), tz);
                self.check(
                    Rule::ActiveHours,
                    oracle::in_span(minute, self.h.notifier.active_hours),
                    || format!("suggestion at local minute {minute}"),
                );
                let mode = self.mode_at(window_id);
                self.check(
                    Rule::BadgeRule,
                    window_id == window_of(at) && sensed_badge == (mode == Mode::SensingOn),
                    || format!("badge {sensed_badge} in {mode:?} window {window_id}"),
                );
                let mut sound = match mode {
                    Mode::SensingOn => {
                        !oracle::is_social(state)
                            && oracle::sensed(&self.context(to, window_id), &self.h.sensing).contains(&state)
                    }
                    Mode::SensingOff => true,
                };
                if let Some(list) = self.served.get(&(to, window_id)) {
                    sound &= list.states.contains(&state);
                }
                self.check(Rule::SuggestionSoundness, sound, || {
                    format!("suggested {state:?} in window {window_id}")
                });
                self.pending.insert(to, (state, window_id));
            }
            NotificationBody::PartnerStateVisit {
                message,
                from,
                state,
                quick_reacts,
            } => {
                let partner = self.partner(from);
                let Some(share) = self.shares.get_mut(&message) else {
                    self.check(Rule::ReferentialIntegrity, false, || {
                        format!("visit for unknown share {message}")
                    });
                    return;
                };
                share.notified += 1;
                let ok = share.notified == 1
                    && share.sender == from
                    && share.state == state
                    && partner == Some(to)
                    && quick_reacts == oracle::QUICK;
                self.check(Rule::DeliveryCompleteness, ok, || {
                    format!("bad visit for {message} to {to}")
                });
            }
            NotificationBody::PartnerReact {
                message,
                from,
                react,
                references,
                referenced_state,
            } => {
                let Some(r) = self.reacts.get_mut(&message) else {
                    self.check(Rule::ReferentialIntegrity, false, || {
                        format!("react note for unknown {message}")
                    });
                    return;
                };
                r.notified += 1;
                let ok = r.notified == 1
                    && r.msg.sender == from
                    && r.msg.react() == Some((react, references))
                    && r.state == referenced_state
                    && r.original_sender == to;
                self.check(Rule::DeliveryCompleteness, ok, || {
                    format!("bad react note for {message} to {to}")
                });
            }
        }
    }

    fn message_basics(&mut self, at: Timestamp, m: &OtterMessage) -> bool {
        let fresh = !self.shares.contains_key(&m.id) && !self.reacts.contains_key(&m.id);
        let ok = fresh && m.pair == self.h.pair && self.tz(m.sender).is_some() && m.sent_at == at;
        self.check(Rule::ReferentialIntegrity, ok, || {
            format!("message {} is malformed or reuses an id", m.id)
        })
    }

    fn state_shared(&mut self, at: Timestamp, m: &OtterMessage) {
        if !self.message_basics(at, m) {
            return;
        }
        let MessageBody::StateShare { state, window_id } = m.body else {
            self.check(Rule::ReferentialIntegrity, false, || {
                format!("state share {} carries a react", m.id)
            });
            return;
        };
        let user = m.sender;
        let (ok, why) = match m.provenance {
            Provenance::SensedList | Provenance::RandomList => match self.served.get(&(user, window_of(at))) {
                Some(list) => (
                    list.states.contains(&state)
                        && list.window_id == window_id
                        && (list.mode == Mode::SensingOn) == (m.provenance == Provenance::SensedList),
                    format!("{state:?} not in the {:?} list {:?}", list.mode, list.states),
                ),
                None => (false, format!("no list served to {user} in window {}", window_of(at))),
            },
            Provenance::NotificationShare => match self.pending.remove(&user) {
                Some(offer) => (
                    offer == (state, window_id),
                    format!("shared {state:?}, offered {offer:?}"),
                ),
                None => (false, format!("no pending suggestion for {user}")),
            },
            other => (false, format!("state share with provenance {other:?}")),
        };
        self.check(Rule::ValidationClosure, ok, || why);
        if self.mode_at(window_id) == Mode::SensingOn && !oracle::is_social(state) {
            let c = self.context(user, window_id);
            let ok = oracle::supports(state, &c, &self.h.sensing);
            self.check(Rule::PredicateSoundness, ok, || format!("{state:?} shared under {c:?}"));
        }
        self.shares.insert(
            m.id,
            Share {
                sender: user,
                state,
                phase: Phase::Sent,
                notified: 0,
            },
        );
    }

    fn react_sent(&mut self, at: Timestamp, m: &OtterMessage) {
        if !self.message_basics(at, m) {
            return;
        }
        let Some((react, references)) = m.react() else {
            self.check(Rule::ReferentialIntegrity, false, || {
                format!("react {} carries a state", m.id)
            });
            return;
        };
        if self.reacts.contains_key(&references) {
            self.check(Rule::ReactToReact, false, || {
                format!("react {} references react {references}", m.id)
            });
            return;
        }
        let Some(share) = self.shares.get(&references).cloned() else {
            self.check(Rule::ReferentialIntegrity, false, || {
                format!("react {} references unknown {references}", m.id)
            });
            return;
        };
        self.check(Rule::Bipartite, self.partner(share.sender) == Some(m.sender), || {
            format!("{} reacted to their own share {references}", m.sender)
        });
        self.check(Rule::DoubleReact, share.phase != Phase::Reacted, || {
            format!("second react to {references}")
        });
        let (quick_ok, phase_ok) = match m.provenance {
            Provenance::QuickReact => (oracle::QUICK.contains(&react), share.phase == Phase::Sent),
            Provenance::InAppReact => (true, share.phase == Phase::Viewed),
            _ => (false, true),
        };
        self.check(Rule::QuickClosure, quick_ok, || {
            format!("{react:?} sent as {:?}", m.provenance)
        });
        if share.phase != Phase::Reacted {
            self.check(Rule::PhaseDag, phase_ok, || {
                format!("{:?} react on {references} in phase {:?}", m.provenance, share.phase)
            });
        }
        if let Some(s) = self.shares.get_mut(&references) {
            s.phase = Phase::Reacted;
        }
        self.reacts.insert(
            m.id,
            React {
                msg: *m,
                original_sender: share.sender,
                state: share.state,
                notified: 0,
            },
        );
    }

    fn advance(&mut self, user: UserId, id: MessageId, what: &str, to: Phase) {
        let Some(share) = self.shares.get(&id).cloned() else {
            self.check(Rule::ReferentialIntegrity, false, || {
                format!("{what} of unknown share {id}")
            });
            return;
        };
        self.check(Rule::Bipartite, self.partner(share.sender) == Some(user), || {
            format!("{user} tried to {what} their own share {id}")
        });
        let ok = matches!(share.phase, Phase::Sent | Phase::Viewed);
        self.check(Rule::PhaseDag, ok, || {
            format!("{what} of {id} in phase {:?}", share.phase)
        });
        if ok {
            self.shares.get_mut(&id).expect("present").phase = to;
        }
    }

    fn finish(&mut self, n: usize) {
        self.index = n;
        let missing: Vec<MessageId> = self
            .shares
            .iter()
            .filter(|(_, s)| s.notified == 0)
            .map(|(id, _)| *id)
            .chain(self.reacts.iter().filter(|(_, r)| r.notified == 0).map(|(id, _)| *id))
            .collect();
        for id in missing {
            self.check(Rule::DeliveryCompleteness, false, || {
                format!("message {id} never reached its recipient")
            });
        }
        let sent = self.shares.len() + self.reacts.len();
        let delivered: usize = self.shares.values().map(|s| s.notified).sum::<usize>()
            + self.reacts.values().map(|r| r.notified).sum::<usize>();
        self.check(Rule::Conservation, sent == delivered, || {
            format!("{sent} messages, {delivered} message notifications")
        });
        let reacted = self.shares.values().filter(|s| s.phase == Phase::Reacted).count();
        let reacts = self.reacts.len();
        self.check(Rule::Conservation, reacted == reacts, || {
            format!("{reacts} reacts but {reacted} shares marked reacted")
        });
    }
}

pub fn verify(log: &EventLog) -> Report {
    let mut report = Report {
        entries: log.entries.len(),
        ..Report::default()
    };
    let Some(h) = log.header() else {
        report.checked.insert(Rule::Header, 1);
        report.violations.push(Violation {
            index: 0,
            rule: Rule::Header,
            detail: "log does not start with a header".into(),
        });
        return report;
    };
    let mut c = Checker {
        h,
        report,
        index: 0,
        signals: HashMap::new(),
        mode_changes: Vec::new(),
        served: HashMap::new(),
        last_suggestion: HashMap::new(),
        pending: HashMap::new(),
        shares: BTreeMap::new(),
        reacts: BTreeMap::new(),
        last_at: log.entries[0].at,
    };
    let mut ids: Vec<UserId> = h.users.iter().map(|u| u.id).collect();
    ids.sort();
    ids.dedup();
    c.check(
        Rule::Header,
        h.users.len() == 2 && ids.len() == 2 && h.horizon_mins > 0,
        || format!("header has users {:?}", h.users),
    );
    for (i, e) in log.iter().skip(1) {
        c.index = i;
        c.entry(e.at, &e.record);
    }
    c.finish(log.entries.len());
    c.report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::LogUser;
    use otterlink_core::{Notification, NotifierConfig, PairId, ReactKind, SensingConfig, TzOffset};

    fn header() -> Header {
        Header {
            seed: 1,
            mode: Mode::SensingOff,
            start: Timestamp(0),
            horizon_mins: 1440,
            pair: PairId(1),
            users: vec![
                LogUser {
                    id: UserId(1),
                    name: "a".into(),
                    tz: TzOffset(0),
                },
                LogUser {
                    id: UserId(2),
                    name: "b".into(),
                    tz: TzOffset(0),
                },
            ],
            sensing: SensingConfig::default(),
            notifier: NotifierConfig::default(),
            drop_probability: 0.0,
        }
    }

    fn suggestion(to: u64, at: i64, state: StateKind) -> Record {
        Record::Notified {
            notification: Notification {
                recipient: UserId(to),
                created_at: Timestamp(at),
                body: NotificationBody::OwnStateSuggestion {
                    state,
                    window_id: at / 600,
                    sensed_badge: false,
                    actions: [
                        otterlink_core::notifier::SuggestionAction::Share,
                        otterlink_core::notifier::SuggestionAction::Dismiss,
                    ],
                },
            },
        }
    }

    fn share(id: u64, from: u64, at: i64) -> OtterMessage {
        OtterMessage {
            id: MessageId(id),
            pair: PairId(1),
            sender: UserId(from),
            body: MessageBody::StateShare {
                state: StateKind::Calm,
                window_id: at / 600,
            },
            sent_at: Timestamp(at),
            provenance: Provenance::NotificationShare,
        }
    }

    fn visit(m: &OtterMessage, to: u64) -> Record {
        Record::Notified {
            notification: otterlink_core::notifier::on_state_share(m, UserId(to)).unwrap(),
        }
    }

    fn base() -> EventLog {
        let mut log = EventLog::default();
        log.push(Timestamp(0), Record::Header(header()));
        log.push(Timestamp(9 * 3600), suggestion(1, 9 * 3600, StateKind::Calm));
        let m = share(1, 1, 9 * 3600 + 60);
        log.push(m.sent_at, Record::StateShared { message: m });
        log.push(m.sent_at, visit(&m, 2));
        log
    }

    #[test]
    fn handmade_clean_log() {
        let r = verify(&base());
        assert!(r.is_clean(), "{r}");
    }

    #[test]
    fn early_suggestion_breaks_the_gap_floor_once() {
        let mut log = base();
        log.push(
            Timestamp(9 * 3600 + 1800),
            suggestion(1, 9 * 3600 + 1800, StateKind::Sad),
        );
        let r = verify(&log);
        assert_eq!(r.violations.len(), 1, "{r}");
        assert_eq!(r.count(Rule::GapFloor), 1);
    }

    #[test]
    fn react_to_react_is_one_violation() {
        let mut log = base();
        let at = 9 * 3600 + 120;
        let react = OtterMessage {
            id: MessageId(2),
            pair: PairId(1),
            sender: UserId(2),
            body: MessageBody::ReactShare {
                react: ReactKind::Love,
                references: MessageId(1),
            },
            sent_at: Timestamp(at),
            provenance: Provenance::QuickReact,
        };
        log.push(Timestamp(at), Record::ReactSent { message: react });
        log.push(
            Timestamp(at),
            Record::Notified {
                notification: otterlink_core::notifier::on_react_share(&react, UserId(1), StateKind::Calm).unwrap(),
            },
        );
        assert!(verify(&log).is_clean(), "{}", verify(&log));
        let bad = OtterMessage {
            id: MessageId(3),
            sender: UserId(1),
            body: MessageBody::ReactShare {
                react: ReactKind::Love,
                references: MessageId(2),
            },
            ..react
        };
        log.push(Timestamp(at), Record::ReactSent { message: bad });
        let r = verify(&log);
        assert_eq!(r.violations.len(), 1, "{r}");
        assert_eq!(r.count(Rule::ReactToReact), 1);
    }

    #[test]
    fn unoffered_notification_share_is_caught() {
        let mut log = base();
        let m = share(2, 2, 9 * 3600 + 600);
        log.push(m.sent_at, Record::StateShared { message: m });
        log.push(m.sent_at, visit(&m, 1));
        let r = verify(&log);
        assert_eq!(r.count(Rule::ValidationClosure), 1, "{r}");
    }

    #[test]
    fn missing_header() {
        let mut log = base();
        log.entries.remove(0);
        assert_eq!(verify(&log).count(Rule::Header), 1);
    }
}
