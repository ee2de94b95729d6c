//! Request handling on top of [`ServiceState`]: envelope validation,
//! authentication, write-ahead logging and snapshots.

use std::path::Path;

use serde_json::Value;

use otterlink_core::{Mode, PairId, Timestamp, UserId};

use crate::config::ServiceConfig;
use crate::error::ServiceError;
use crate::protocol::{kinds, Envelope, ErrorBody, Request, SetModeBody, PROTOCOL_VERSION};
use crate::state::{Applied, PairRecord, Push, ServiceState};
use crate::store::{CorruptLog, EventStore, LogRecord, Snapshot};

/// Per-connection protocol state.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Connection {
    pub user: Option<UserId>,
    pub last_seq: Option<u64>,
}

/// A server-to-client message before its per-connection `seq` is assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub kind: String,
    pub body: Value,
}

impl Outgoing {
    pub fn into_envelope(self, seq: u64) -> Envelope {
        Envelope::new(self.kind, seq, self.body)
    }

    pub fn is_error(&self) -> bool {
        self.kind == kinds::ERROR
    }
}

impl From<&Push> for Outgoing {
    fn from(p: &Push) -> Self {
        Outgoing {
            kind: p.event.kind().to_owned(),
            body: serde_json::to_value(&p.event).expect("events serialize"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dispatch {
    pub reply: Outgoing,
    pub pushes: Vec<Push>,
    /// Set when this request bound the connection to a (new) user.
    pub bound: Option<UserId>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RestoreReport {
    pub snapshot_seq: Option<u64>,
    pub replayed: usize,
    pub corrupt: Option<CorruptLog>,
}

pub struct Service {
    state: ServiceState,
    config: ServiceConfig,
    store: Option<EventStore>,
    last_seq: u64,
    since_snapshot: u64,
}

fn error_reply(reply_to: Option<u64>, e: &ServiceError) -> Outgoing {
    Outgoing {
        kind: kinds::ERROR.to_owned(),
        body: serde_json::to_value(ErrorBody {
            reply_to,
            code: e.code(),
            message: e.to_string(),
        })
        .expect("error bodies serialize"),
    }
}

impl Service {
    /// A service with no persistence.
    pub fn in_memory(config: ServiceConfig) -> Self {
        Service {
            state: ServiceState::new(config.seed),
            config,
            store: None,
            last_seq: 0,
            since_snapshot: 0,
        }
    }

    /// Opens (or creates) a data directory: loads the snapshot, replays the
    /// log suffix, and truncates a torn log tail.
    pub fn open(dir: impl AsRef<Path>, config: ServiceConfig) -> Result<(Self, RestoreReport), ServiceError> {
        let (store, recovered) = EventStore::open(dir, config.fsync)?;
        let snapshot: Option<Snapshot<ServiceState>> = store.read_snapshot()?;
        let mut report = RestoreReport {
            snapshot_seq: snapshot.as_ref().map(|s| s.seq),
            corrupt: recovered.corrupt,
            ..Default::default()
        };
        let (state, mut last_seq) = match snapshot {
            Some(s) => (s.state, s.seq),
            None => (ServiceState::new(config.seed), 0),
        };
        let mut service = Service {
            state,
            config,
            store: None,
            last_seq,
            since_snapshot: 0,
        };
        let base = last_seq;
        for record in recovered.records.iter().filter(|r| r.seq > base) {
            service.replay(record)?;
            last_seq = record.seq;
            report.replayed += 1;
        }
        service.last_seq = last_seq;
        service.since_snapshot = report.replayed as u64;
        service.store = Some(store);
        Ok((service, report))
    }

    pub fn state(&self) -> &ServiceState {
        &self.state
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    /// Sequence number of the last logged record.
    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    fn replay(&mut self, record: &LogRecord) -> Result<(), ServiceError> {
        let fail = |reason: String| ServiceError::Replay {
            seq: record.seq,
            reason,
        };
        let request = Request::decode(&record.envelope, true).map_err(|e| fail(format!("{e:?}")))?;
        let user = match &record.envelope.token {
            Some(token) => Some(
                self.state
                    .user_by_token(token)
                    .ok_or_else(|| fail("unknown token".into()))?,
            ),
            None => None,
        };
        self.state
            .apply(user, &request, record.timestamp, &self.config)
            .map_err(|e| fail(e.to_string()))?;
        Ok(())
    }

    /// Applies a request and, if it changed anything, logs it before returning.
    fn commit(&mut self, user: Option<UserId>, request: &Request, now: Timestamp) -> Result<Applied, ServiceError> {
        let applied = self.state.apply(user, request, now, &self.config)?;
        if applied.changed && request.mutates() {
            self.last_seq += 1;
            if let Some(store) = self.store.as_mut() {
                let mut envelope = Envelope::new(request.kind(), self.last_seq, request.body());
                envelope.token = user.and_then(|u| self.state.user(u)).map(|u| u.token.clone());
                store.append(&LogRecord {
                    seq: self.last_seq,
                    timestamp: now,
                    envelope,
                })?;
                self.since_snapshot += 1;
                if self.config.snapshot_every > 0 && self.since_snapshot >= self.config.snapshot_every {
                    self.snapshot()?;
                }
            }
        }
        Ok(applied)
    }

    /// Writes a snapshot covering every record logged so far.
    pub fn snapshot(&mut self) -> Result<(), ServiceError> {
        if let Some(store) = self.store.as_ref() {
            store.write_snapshot(&Snapshot {
                seq: self.last_seq,
                state: &self.state,
            })?;
            self.since_snapshot = 0;
        }
        Ok(())
    }

    pub fn handle_line(&mut self, conn: &mut Connection, line: &str, now: Timestamp) -> Dispatch {
        match serde_json::from_str::<Envelope>(line) {
            Ok(env) => self.handle(conn, env, now),
            Err(e) => Dispatch {
                reply: error_reply(None, &ServiceError::Malformed(e.to_string())),
                pushes: Vec::new(),
                bound: None,
            },
        }
    }

    pub fn handle(&mut self, conn: &mut Connection, env: Envelope, now: Timestamp) -> Dispatch {
        let seq = env.seq;
        match self.handle_inner(conn, env, now) {
            Ok((kind, applied, bound)) => {
                let mut body = applied.reply;
                if let Value::Object(map) = &mut body {
                    map.insert("reply_to".into(), Value::from(seq));
                }
                Dispatch {
                    reply: Outgoing { kind, body },
                    pushes: applied.pushes,
                    bound,
                }
            }
            Err(e) => Dispatch {
                reply: error_reply(Some(seq), &e),
                pushes: Vec::new(),
                bound: None,
            },
        }
    }

    fn handle_inner(
        &mut self,
        conn: &mut Connection,
        env: Envelope,
        now: Timestamp,
    ) -> Result<(String, Applied, Option<UserId>), ServiceError> {
        if env.version != PROTOCOL_VERSION {
            return Err(ServiceError::UnsupportedVersion(env.version));
        }
        if let Some(last) = conn.last_seq {
            if env.seq <= last {
                return Err(ServiceError::BadSeq { last, got: env.seq });
            }
        }
        conn.last_seq = Some(env.seq);

        let request = Request::decode(&env, false)?;
        let mut bound = None;
        let user = match (&request, &env.token) {
            (Request::Register(_), _) => None,
            (_, Some(token)) => {
                let u = self.state.user_by_token(token).ok_or(ServiceError::Unauthorized)?;
                if conn.user != Some(u) {
                    conn.user = Some(u);
                    bound = Some(u);
                }
                Some(u)
            }
            (_, None) => Some(conn.user.ok_or(ServiceError::Unauthorized)?),
        };
        let applied = self.commit(user, &request, now)?;
        if let Request::Register(_) = request {
            let id: UserId = serde_json::from_value(applied.reply["user"].clone()).expect("register reply");
            conn.user = Some(id);
            bound = Some(id);
        }
        Ok((request.kind().to_owned(), applied, bound))
    }

    /// Fires any due own-state suggestions.
    pub fn tick(&mut self, now: Timestamp) -> Result<Vec<Push>, ServiceError> {
        Ok(self.commit(None, &Request::Tick, now)?.pushes)
    }

    /// Admin mode switch, effective from the next window.
    pub fn set_mode(&mut self, pair: PairId, mode: Mode, now: Timestamp) -> Result<PairRecord, ServiceError> {
        self.commit(None, &Request::SetMode(SetModeBody { pair, mode }), now)?;
        Ok(self.state.pair(pair).expect("set_mode checked the pair").clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::ErrorCode;
    use serde_json::json;

    fn send(svc: &mut Service, conn: &mut Connection, seq: u64, kind: &str, body: Value, now: i64) -> Dispatch {
        svc.handle(conn, Envelope::new(kind, seq, body), Timestamp(now))
    }

    fn code(d: &Dispatch) -> Option<ErrorCode> {
        d.reply
            .is_error()
            .then(|| serde_json::from_value(d.reply.body["code"].clone()).unwrap())
    }

    #[test]
    fn malformed_and_unknown_leave_state_alone() {
        let mut svc = Service::in_memory(ServiceConfig::default());
        let mut conn = Connection::default();
        let before = svc.state().clone();
        let d = svc.handle_line(&mut conn, "{nope", Timestamp(0));
        assert_eq!(code(&d), Some(ErrorCode::Malformed));
        let d = send(&mut svc, &mut conn, 1, "dance", json!({}), 0);
        assert_eq!(code(&d), Some(ErrorCode::UnknownType));
        let d = send(&mut svc, &mut conn, 2, "tick", json!({}), 0);
        assert_eq!(code(&d), Some(ErrorCode::UnknownType));
        let d = send(&mut svc, &mut conn, 3, "register", json!({"nom": 1}), 0);
        assert_eq!(code(&d), Some(ErrorCode::Malformed));
        assert_eq!(svc.state(), &before);
        // Connection survives.
        let d = send(&mut svc, &mut conn, 4, "register", json!({"name": "a"}), 0);
        assert_eq!(code(&d), None);
        assert_eq!(d.reply.body["reply_to"], 4);
    }

    #[test]
    fn seq_must_increase() {
        let mut svc = Service::in_memory(ServiceConfig::default());
        let mut conn = Connection::default();
        send(&mut svc, &mut conn, 5, "register", json!({"name": "a"}), 0);
        let d = send(&mut svc, &mut conn, 5, "get_state_list", json!({}), 0);
        assert_eq!(code(&d), Some(ErrorCode::BadSeq));
    }

    #[test]
    fn unauthenticated_requests_rejected() {
        let mut svc = Service::in_memory(ServiceConfig::default());
        let mut conn = Connection::default();
        let d = send(&mut svc, &mut conn, 1, "get_state_list", json!({}), 0);
        assert_eq!(code(&d), Some(ErrorCode::Unauthorized));
        let d = svc.handle(
            &mut conn,
            Envelope::new("get_state_list", 2, json!({})).with_token("bogus"),
            Timestamp(0),
        );
        assert_eq!(code(&d), Some(ErrorCode::Unauthorized));
    }

    #[test]
    fn token_binds_a_fresh_connection() {
        let mut svc = Service::in_memory(ServiceConfig::default());
        let mut c1 = Connection::default();
        let d = send(&mut svc, &mut c1, 1, "register", json!({"name": "a"}), 0);
        let token = d.reply.body["token"].as_str().unwrap().to_owned();
        let mut c2 = Connection::default();
        let d = svc.handle(
            &mut c2,
            Envelope::new(
                "sensor_event",
                1,
                json!({"t": 5, "kind": "hr", "payload": {"bpm": 70.0}}),
            )
            .with_token(&token),
            Timestamp(5),
        );
        assert_eq!(code(&d), None);
        assert_eq!(d.bound, c1.user);
        assert_eq!(c2.user, c1.user);
    }

    #[test]
    fn share_fans_out_to_partner() {
        let mut svc = Service::in_memory(ServiceConfig::default());
        let (mut ca, mut cb) = (Connection::default(), Connection::default());
        send(&mut svc, &mut ca, 1, "register", json!({"name": "a"}), 0);
        let b = send(&mut svc, &mut cb, 1, "register", json!({"name": "b"}), 0);
        let b_id = b.reply.body["user"].clone();
        let d = send(&mut svc, &mut ca, 2, "pair", json!({"partner": b_id}), 0);
        assert_eq!(code(&d), None);
        let list = send(&mut svc, &mut ca, 3, "get_state_list", json!({}), 10);
        let state = list.reply.body["states"][0].clone();
        let d = send(&mut svc, &mut ca, 4, "share_state", json!({"state": state}), 20);
        assert_eq!(d.reply.kind, "share_state");
        assert_eq!(d.pushes.len(), 1);
        assert_eq!(json!(d.pushes[0].to), b_id);
        let out = Outgoing::from(&d.pushes[0]);
        assert_eq!(out.kind, "notification");
        assert_eq!(out.body["kind"], "partner_state_visit");
        assert_eq!(
            out.body["quick_reacts"],
            json!(["love", "nodding", "handholding", "hugging"])
        );

        let msg = d.reply.body["id"].clone();
        let q = send(
            &mut svc,
            &mut cb,
            2,
            "send_react",
            json!({"message": msg, "react": "love", "via": "quick"}),
            30,
        );
        let react_id = q.reply.body["id"].clone();
        let d = send(
            &mut svc,
            &mut ca,
            5,
            "send_react",
            json!({"message": react_id, "react": "love", "via": "quick"}),
            40,
        );
        assert_eq!(code(&d), Some(ErrorCode::ReactToReact));
    }

    #[test]
    fn restore_matches_live_state() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ServiceConfig {
            snapshot_every: 4,
            ..Default::default()
        };
        let (mut svc, report) = Service::open(dir.path(), cfg.clone()).unwrap();
        assert_eq!(report, RestoreReport::default());
        let (mut ca, mut cb) = (Connection::default(), Connection::default());
        send(&mut svc, &mut ca, 1, "register", json!({"name": "a"}), 0);
        let b = send(&mut svc, &mut cb, 1, "register", json!({"name": "b"}), 0);
        send(
            &mut svc,
            &mut ca,
            2,
            "pair",
            json!({"partner": b.reply.body["user"]}),
            0,
        );
        for m in 0..30 {
            send(
                &mut svc,
                &mut ca,
                10 + m,
                "sensor_event",
                json!({"t": m * 60, "kind": "hr", "payload": {"bpm": 70.0 + m as f64}}),
                m as i64 * 60,
            );
            svc.tick(Timestamp(m as i64 * 60)).unwrap();
        }
        send(&mut svc, &mut ca, 100, "get_state_list", json!({}), 1800);
        let live = svc.state().clone();
        let seq = svc.last_seq();
        drop(svc);
        let (restored, report) = Service::open(dir.path(), cfg).unwrap();
        assert!(report.snapshot_seq.is_some());
        assert!(report.replayed < seq as usize);
        assert_eq!(restored.state(), &live);
        assert_eq!(restored.last_seq(), seq);
    }
}
