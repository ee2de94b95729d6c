//! Seeded crash-and-restore histories. Each history drives a persisted
//! service and an in-memory twin with the same random requests, kills the
//! persisted one at random points (sometimes leaving a torn log record) and
//! checks that every restore reproduces the twin exactly.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use otterlink_core::{
    rng, DailyProfile, Mode, MotionLabel, PairId, ReactKind, StateKind, Timestamp, TraceEvent, UserId,
};
use otterlink_service::store::LOG_FILE;
use otterlink_service::{Connection, Envelope, Service, ServiceConfig};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HistoryStats {
    pub requests: usize,
    pub crashes: usize,
    pub torn: usize,
}

struct Driver {
    now: Timestamp,
    users: Vec<(UserId, String)>,
    seq: u64,
    stats: HistoryStats,
}

fn send(svc: &mut Service, token: &Option<String>, kind: &str, body: &Value, seq: u64, now: Timestamp) -> Value {
    let mut env = Envelope::new(kind, seq, body.clone());
    env.token = token.clone();
    let d = svc.handle(&mut Connection::default(), env, now);
    json!({ "kind": d.reply.kind, "body": d.reply.body })
}

impl Driver {
    fn pick_user(&self, r: &mut ChaCha8Rng) -> Option<(UserId, String)> {
        (!self.users.is_empty()).then(|| self.users[r.gen_range(0..self.users.len())].clone())
    }

    fn request(&self, r: &mut ChaCha8Rng, twin: &Service) -> Option<(Option<String>, &'static str, Value)> {
        let (id, token) = match r.gen_range(0..10) {
            0 => {
                return Some((
                    None,
                    "register",
                    json!({ "name": "u", "tz_offset_mins": 60 * r.gen_range(-10..=10) }),
                ))
            }
            _ => self.pick_user(r)?,
        };
        let token = Some(token);
        let msg = r.gen_range(1..12u64);
        let event = |e: TraceEvent| serde_json::to_value(e).expect("trace events serialize");
        Some(match r.gen_range(0..12) {
            0 => {
                let partner = self.pick_user(r)?.0;
                (token, "pair", json!({ "partner": partner }))
            }
            1 | 2 => (
                token,
                "sensor_event",
                event(TraceEvent::hr(self.now, r.gen_range(40.0..190.0))),
            ),
            3 => {
                let label = MotionLabel::ALL[r.gen_range(0..MotionLabel::ALL.len())];
                (token, "sensor_event", event(TraceEvent::motion(self.now, label)))
            }
            4 => {
                let rest = r.gen_range(50.0..75.0);
                let p = DailyProfile::new(self.now.unix().div_euclid(86_400), 45.0, rest, rest + 30.0, 185.0)
                    .expect("valid profile");
                (token, "sensor_event", event(TraceEvent::profile(self.now, p)))
            }
            5 => (token, "get_state_list", json!({})),
            6 | 7 => {
                let from_notification = r.gen_bool(0.4);
                let offered = if from_notification {
                    twin.state().pending_suggestion(id).map(|s| s.state)
                } else {
                    twin.state()
                        .served_list(id)
                        .map(|l| l.states[r.gen_range(0..l.states.len())])
                };
                let state = offered.unwrap_or(StateKind::ALL[r.gen_range(0..StateKind::ALL.len())]);
                let origin = if from_notification { "notification" } else { "list" };
                (token, "share_state", json!({ "state": state, "origin": origin }))
            }
            8 => (token, "view_state", json!({ "message": msg })),
            9 => {
                let react = ReactKind::ALL[r.gen_range(0..ReactKind::ALL.len())];
                let via = if r.gen_bool(0.5) { "quick" } else { "in_app" };
                (
                    token,
                    "send_react",
                    json!({ "message": msg, "react": react, "via": via }),
                )
            }
            10 => (token, "dont_react", json!({ "message": msg })),
            _ => (token, "view_react", json!({ "message": msg })),
        })
    }
}

fn tear(dir: &Path) -> std::io::Result<()> {
    let mut f = OpenOptions::new().append(true).open(dir.join(LOG_FILE))?;
    f.write_all(br#"{"seq":999999,"timestamp":1,"envel"#)
}

/// Runs history `index` of `seed` in `dir`, which must be empty.
pub fn run_history(dir: &Path, seed: u64, index: u64, steps: usize) -> Result<HistoryStats, String> {
    let mut r = rng::stream(seed, "durability", &[index]);
    let cfg = ServiceConfig {
        snapshot_every: if r.gen_bool(0.3) { 0 } else { r.gen_range(1..30) },
        seed: r.gen(),
        ..ServiceConfig::default()
    };
    let open = |cfg: &ServiceConfig| Service::open(dir, cfg.clone()).map_err(|e| format!("open: {e}"));
    let (mut live, _) = open(&cfg)?;
    let mut twin = Service::in_memory(cfg.clone());
    let mut d = Driver {
        now: Timestamp(1_700_000_000 + r.gen_range(0..86_400)),
        users: Vec::new(),
        seq: 0,
        stats: HistoryStats::default(),
    };
    let fail = |step: usize, what: String| Err(format!("history {index} step {step}: {what}"));
    for step in 0..steps {
        match r.gen_range(0..20) {
            0..=2 => d.now = d.now.plus_mins(r.gen_range(0..120)),
            3 => {
                let (a, b) = (live.tick(d.now), twin.tick(d.now));
                if a.as_ref().ok() != b.as_ref().ok() {
                    return fail(step, "tick diverged".into());
                }
            }
            4 => {
                let pair = PairId(r.gen_range(1..3));
                let mode = if r.gen_bool(0.5) {
                    Mode::SensingOn
                } else {
                    Mode::SensingOff
                };
                let a = live.set_mode(pair, mode, d.now).map_err(|e| e.code());
                let b = twin.set_mode(pair, mode, d.now).map_err(|e| e.code());
                if a != b {
                    return fail(step, format!("set_mode diverged: {a:?} vs {b:?}"));
                }
            }
            5 => {
                let torn = r.gen_bool(0.5);
                drop(live);
                d.stats.crashes += 1;
                if torn {
                    tear(dir).map_err(|e| format!("tearing log: {e}"))?;
                    d.stats.torn += 1;
                }
                let (restored, report) = open(&cfg)?;
                if report.corrupt.is_some() != torn {
                    return fail(step, format!("torn={torn} but corrupt={:?}", report.corrupt));
                }
                if restored.state() != twin.state() || restored.last_seq() != twin.last_seq() {
                    return fail(step, "restored state differs from live twin".into());
                }
                live = restored;
            }
            _ => {
                let Some((token, kind, body)) = d.request(&mut r, &twin) else {
                    continue;
                };
                d.seq += 1;
                d.stats.requests += 1;
                let a = send(&mut live, &token, kind, &body, d.seq, d.now);
                let b = send(&mut twin, &token, kind, &body, d.seq, d.now);
                if a != b {
                    return fail(step, format!("{kind} replied {a} vs {b}"));
                }
                if kind == "register" {
                    let id: UserId = serde_json::from_value(b["body"]["user"].clone()).map_err(|e| e.to_string())?;
                    let token = b["body"]["token"].as_str().unwrap_or_default().to_owned();
                    d.users.push((id, token));
                }
            }
        }
    }
    drop(live);
    let (restored, _) = open(&cfg)?;
    if restored.state() != twin.state() {
        return fail(steps, "final restore differs".into());
    }
    Ok(d.stats)
}
