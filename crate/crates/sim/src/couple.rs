//! Two simulated partners exchanging states through an in-process service,
//! minute by minute on virtual time.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use thiserror::Error;

use otterlink_core::{
    rng, MessageId, Mode, Notification, NotificationBody, OtterMessage, ReactKind, StateKind, StateList, Timestamp,
    TraceEvent, TzOffset, UserId,
};
use otterlink_service::{Connection, Envelope, Event, PairRecord, Push, Service, ServiceConfig};

use crate::agent::{AgentPolicy, PolicyError};
use crate::config::Config;
use crate::log::{EventLog, Header, LogUser, Record};
use crate::plan::{generate_trace, TraceError, TraceSpec};

pub struct Partner<'a> {
    pub name: &'a str,
    pub tz: TzOffset,
    pub trace: &'a [TraceEvent],
    pub policy: &'a AgentPolicy,
}

pub struct CoupleRun<'a> {
    pub partners: [Partner<'a>; 2],
    pub mode: Mode,
    pub start: Timestamp,
    pub horizon_mins: i64,
    pub seed: u64,
    pub service: ServiceConfig,
    pub drop_probability: f64,
    pub max_response_mins: i64,
    /// Admin mode switch applied at the given instant.
    pub mode_switch: Option<(Timestamp, Mode)>,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("trace for {name} ends at {last}, before the horizon ends at {end}")]
    TraceTooShort {
        name: String,
        last: Timestamp,
        end: Timestamp,
    },
    #[error("agent {name}: {source}")]
    Policy { name: String, source: PolicyError },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{request} from {user} rejected at {at}: {body}")]
    Rejected {
        at: Timestamp,
        user: String,
        request: String,
        body: Value,
    },
    #[error("unreadable reply to {request}: {detail}")]
    Reply { request: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Action {
    OpenApp,
    QuickReact { message: MessageId, react: ReactKind },
    View { message: MessageId },
    InAppReact { message: MessageId, react: ReactKind },
    Dismiss { message: MessageId },
    ViewReact { message: MessageId },
    ShareSuggestion { state: StateKind, window_id: i64 },
}

struct Client {
    user: UserId,
    token: String,
    conn: Connection,
    seq: u64,
}

struct Agent<'a> {
    partner: &'a Partner<'a>,
    client: Client,
    rng: ChaCha8Rng,
    opens: ChaCha8Rng,
    /// The suggestion the agent may still share from.
    suggestion: Option<(StateKind, i64)>,
}

struct Runner<'a> {
    run: &'a CoupleRun<'a>,
    service: Service,
    agents: Vec<Agent<'a>>,
    queue: BinaryHeap<Reverse<(Timestamp, u64, usize, Action)>>,
    queued: u64,
    drops: ChaCha8Rng,
    log: EventLog,
}

fn parse<T: DeserializeOwned>(request: &str, body: Value) -> Result<T, SimError> {
    serde_json::from_value(body).map_err(|e| SimError::Reply {
        request: request.into(),
        detail: e.to_string(),
    })
}

fn send(
    service: &mut Service,
    client: &mut Client,
    name: &str,
    kind: &str,
    body: Value,
    now: Timestamp,
) -> Result<(Value, Vec<Push>), SimError> {
    client.seq += 1;
    let mut env = Envelope::new(kind, client.seq, body);
    if !client.token.is_empty() {
        env.token = Some(client.token.clone());
    }
    let d = service.handle(&mut client.conn, env, now);
    if d.reply.is_error() {
        return Err(SimError::Rejected {
            at: now,
            user: name.into(),
            request: kind.into(),
            body: d.reply.body,
        });
    }
    Ok((d.reply.body, d.pushes))
}

impl<'a> Runner<'a> {
    /// Sends a request for agent `i`. The caller logs the outcome and then
    /// routes the returned pushes, so records appear in causal order.
    fn call(&mut self, i: usize, kind: &str, body: Value, now: Timestamp) -> Result<(Value, Vec<Push>), SimError> {
        let agent = &mut self.agents[i];
        send(
            &mut self.service,
            &mut agent.client,
            agent.partner.name,
            kind,
            body,
            now,
        )
    }

    fn schedule(&mut self, i: usize, at: Timestamp, action: Action) {
        self.queued += 1;
        self.queue.push(Reverse((at, self.queued, i, action)));
    }

    fn delay(&mut self, i: usize, now: Timestamp) -> Timestamp {
        now.plus_mins(self.agents[i].rng.gen_range(1..=self.run.max_response_mins))
    }

    fn agent_of(&self, user: UserId) -> usize {
        self.agents
            .iter()
            .position(|a| a.client.user == user)
            .expect("push for a simulated user")
    }

    fn route(&mut self, pushes: Vec<Push>, now: Timestamp) {
        for push in pushes {
            let Event::Notification(n) = push.event else { continue };
            let dropped = self.drops.gen::<f64>() < self.run.drop_probability;
            let i = self.agent_of(push.to);
            if dropped {
                if n.is_suggestion() {
                    // The server has superseded whatever the agent held.
                    self.agents[i].suggestion = None;
                }
                self.log.push(now, Record::Dropped { notification: n });
            } else {
                self.log.push(now, Record::Notified { notification: n });
                self.on_notification(i, n, now);
            }
        }
    }

    fn on_notification(&mut self, i: usize, n: Notification, now: Timestamp) {
        let policy = self.agents[i].partner.policy;
        match n.body {
            NotificationBody::PartnerStateVisit { message, .. } => {
                let at = self.delay(i, now);
                let rng = &mut self.agents[i].rng;
                let action = if rng.gen::<f64>() < policy.quick_react_probability {
                    Action::QuickReact {
                        message,
                        react: policy.sample_react(rng, true),
                    }
                } else if rng.gen::<f64>() < policy.dismiss_probability {
                    Action::Dismiss { message }
                } else {
                    Action::View { message }
                };
                self.schedule(i, at, action);
            }
            NotificationBody::PartnerReact { message, .. } => {
                let at = self.delay(i, now);
                self.schedule(i, at, Action::ViewReact { message });
            }
            NotificationBody::OwnStateSuggestion { state, window_id, .. } => {
                self.agents[i].suggestion = Some((state, window_id));
                if self.agents[i].rng.gen::<f64>() < policy.share_propensity {
                    let at = self.delay(i, now);
                    self.schedule(i, at, Action::ShareSuggestion { state, window_id });
                } else {
                    let user = self.agents[i].client.user;
                    self.log.push(now, Record::SuggestionDismissed { user, state });
                }
            }
        }
    }

    fn share(&mut self, i: usize, state: StateKind, origin: &str, now: Timestamp) -> Result<(), SimError> {
        let (reply, pushes) = self.call(i, "share_state", json!({ "state": state, "origin": origin }), now)?;
        let message: OtterMessage = parse("share_state", reply)?;
        self.log.push(now, Record::StateShared { message });
        self.route(pushes, now);
        Ok(())
    }

    fn perform(&mut self, i: usize, action: Action, now: Timestamp) -> Result<(), SimError> {
        let user = self.agents[i].client.user;
        let policy = self.agents[i].partner.policy;
        match action {
            Action::OpenApp => {
                let list: StateList = parse("get_state_list", self.call(i, "get_state_list", json!({}), now)?.0)?;
                let states = list.states.clone();
                self.log.push(now, Record::ListServed { user, list });
                let rng = &mut self.agents[i].rng;
                if rng.gen::<f64>() < policy.share_propensity {
                    let state = *states.choose(rng).expect("lists are never empty");
                    self.share(i, state, "list", now)?;
                }
            }
            Action::QuickReact { message, react } | Action::InAppReact { message, react } => {
                let via = if matches!(action, Action::QuickReact { .. }) {
                    "quick"
                } else {
                    "in_app"
                };
                let body = json!({ "message": message, "react": react, "via": via });
                let (reply, pushes) = self.call(i, "send_react", body, now)?;
                let message: OtterMessage = parse("send_react", reply)?;
                self.log.push(now, Record::ReactSent { message });
                self.route(pushes, now);
            }
            Action::View { message } => {
                self.call(i, "view_state", json!({ "message": message }), now)?;
                self.log.push(now, Record::Viewed { user, message });
                let at = self.delay(i, now);
                let rng = &mut self.agents[i].rng;
                let next = if rng.gen::<f64>() < policy.dismiss_probability {
                    Action::Dismiss { message }
                } else {
                    Action::InAppReact {
                        message,
                        react: policy.sample_react(rng, false),
                    }
                };
                self.schedule(i, at, next);
            }
            Action::Dismiss { message } => {
                self.call(i, "dont_react", json!({ "message": message }), now)?;
                self.log.push(now, Record::Dismissed { user, message });
            }
            Action::ViewReact { message } => {
                let (reply, _) = self.call(i, "view_react", json!({ "message": message }), now)?;
                let react = parse("view_react", reply["react"].clone())?;
                let state = parse("view_react", reply["state"].clone())?;
                self.log.push(
                    now,
                    Record::ReactViewed {
                        user,
                        message,
                        react,
                        state,
                    },
                );
            }
            Action::ShareSuggestion { state, window_id } => {
                if self.agents[i].suggestion != Some((state, window_id)) {
                    return Ok(());
                }
                self.agents[i].suggestion = None;
                self.share(i, state, "notification", now)?;
            }
        }
        Ok(())
    }
}

/// Runs the couple for `horizon_mins` minutes and returns the event log.
pub fn run_couple(run: &CoupleRun<'_>) -> Result<EventLog, SimError> {
    let end = run.start.plus_mins(run.horizon_mins);
    for p in &run.partners {
        p.policy.validate().map_err(|source| SimError::Policy {
            name: p.name.into(),
            source,
        })?;
        let last = p.trace.last().map_or(Timestamp(i64::MIN), |e| e.t);
        if last < end.plus_mins(-1) {
            return Err(SimError::TraceTooShort {
                name: p.name.into(),
                last,
                end,
            });
        }
    }

    let mut cfg = run.service.clone();
    cfg.default_mode = run.mode;
    cfg.seed = rng::mix(run.seed, &[rng::domain("service")]);
    let mut service = Service::in_memory(cfg.clone());

    let mut agents = Vec::new();
    let mut users = Vec::new();
    for (i, p) in run.partners.iter().enumerate() {
        let mut client = Client {
            user: UserId(0),
            token: String::new(),
            conn: Connection::default(),
            seq: 0,
        };
        let body = json!({ "name": p.name, "tz_offset_mins": p.tz });
        let (reply, _) = send(&mut service, &mut client, p.name, "register", body, run.start)?;
        client.user = parse("register", reply["user"].clone())?;
        client.token = parse("register", reply["token"].clone())?;
        users.push(LogUser {
            id: client.user,
            name: p.name.into(),
            tz: p.tz,
        });
        agents.push(Agent {
            partner: p,
            client,
            rng: rng::stream(run.seed, "agent", &[i as u64]),
            opens: rng::stream(run.seed, "opens", &[i as u64]),
            suggestion: None,
        });
    }
    let partner = agents[1].client.user;
    let (reply, _) = send(
        &mut service,
        &mut agents[0].client,
        run.partners[0].name,
        "pair",
        json!({ "partner": partner }),
        run.start,
    )?;
    let pair: PairRecord = parse("pair", reply)?;

    let mut log = EventLog::default();
    log.push(
        run.start,
        Record::Header(Header {
            seed: run.seed,
            mode: run.mode,
            start: run.start,
            horizon_mins: run.horizon_mins,
            pair: pair.id,
            users,
            sensing: cfg.sensing.clone(),
            notifier: cfg.notifier.clone(),
            drop_probability: run.drop_probability,
        }),
    );

    let mut r = Runner {
        run,
        service,
        agents,
        queue: BinaryHeap::new(),
        queued: 0,
        drops: rng::stream(run.seed, "drops", &[]),
        log,
    };
    let mut cursors = [0usize; 2];
    let mut switched = false;
    for minute in 0..run.horizon_mins {
        let now = run.start.plus_mins(minute);
        for (i, cursor) in cursors.iter_mut().enumerate() {
            let trace = run.partners[i].trace;
            while *cursor < trace.len() && trace[*cursor].t <= now {
                let input = trace[*cursor];
                *cursor += 1;
                if input.t < run.start {
                    continue;
                }
                r.call(
                    i,
                    "sensor_event",
                    serde_json::to_value(input).expect("trace event"),
                    now,
                )?;
                r.log.push(
                    now,
                    Record::Sensor {
                        user: r.agents[i].client.user,
                        input,
                    },
                );
            }
        }
        if let Some((at, mode)) = run.mode_switch.filter(|(at, _)| !switched && now >= *at) {
            switched = true;
            let record = r.service.set_mode(pair.id, mode, now).map_err(|e| SimError::Rejected {
                at,
                user: "admin".into(),
                request: "set_mode".into(),
                body: json!({ "message": e.to_string() }),
            })?;
            let change = *record.mode_changes.last().expect("set_mode records a change");
            r.log.push(
                now,
                Record::ModeChanged {
                    pair: pair.id,
                    mode,
                    from_window: change.from_window,
                },
            );
        }
        let pushes = r.service.tick(now).map_err(|e| SimError::Rejected {
            at: now,
            user: "scheduler".into(),
            request: "tick".into(),
            body: json!({ "message": e.to_string() }),
        })?;
        r.route(pushes, now);

        for i in 0..r.agents.len() {
            let partner = r.agents[i].partner;
            let awake = run
                .service
                .notifier
                .active_hours
                .contains(now.local_minute_of_day(partner.tz));
            let open = r.agents[i].opens.gen::<f64>() < partner.policy.app_open_per_hour / 60.0;
            if awake && open {
                r.perform(i, Action::OpenApp, now)?;
            }
        }
        while let Some(Reverse((at, _, i, action))) = r.queue.peek().copied() {
            if at > now {
                break;
            }
            r.queue.pop();
            r.perform(i, action, now)?;
        }
    }
    Ok(r.log)
}

/// Generates both partners' traces from the configuration and runs the couple
/// over `simulation.days` days.
pub fn simulate(cfg: &Config) -> Result<EventLog, SimError> {
    let sim = &cfg.simulation;
    let traces = sim
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let spec = TraceSpec {
                start: sim.start,
                days: sim.days,
                tz: a.tz(),
                noise_sigma: sim.noise_sigma,
                seed: rng::mix(sim.seed, &[rng::domain("trace"), i as u64]),
            };
            generate_trace(&sim.day_plan, &a.profile, &spec)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let partner = |i: usize| Partner {
        name: &sim.agents[i].name,
        tz: sim.agents[i].tz(),
        trace: &traces[i],
        policy: &sim.agents[i].policy,
    };
    run_couple(&CoupleRun {
        partners: [partner(0), partner(1)],
        mode: sim.mode,
        start: sim.start,
        horizon_mins: sim.days as i64 * 1440,
        seed: sim.seed,
        service: cfg.service.clone(),
        drop_probability: sim.drop_probability,
        max_response_mins: sim.max_response_mins,
        mode_switch: None,
    })
}
