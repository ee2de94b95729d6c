//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use otterlink_core::arousal::thresholds_or_widened;
use otterlink_core::{
    random_list, rng, sensed_list, ArousalLevel, InteractionError, InteractionSession, MessageId, Mode, MotionLabel,
    PairId, Phase, Profile, ReactKind, ReactVia, Sample, SensingConfig, SensorWindow, ShareSource, StateKind,
    StateList, Timestamp, TzOffset, UserId,
};
use otterlink_sim::config::Config;
use otterlink_sim::couple::simulate;
use otterlink_sim::fuzz::run_history;
use otterlink_sim::log::{EventLog, Record};
use otterlink_sim::oracle;
use otterlink_sim::verify::{verify, Rule};

type Outcome = Result<String, String>;

fn ensure(ok: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(why())
    }
}

fn within(start: Instant, budget: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < budget, || format!("took {took:.2?}, budget {budget:?}"))
}

/// The list rules, checked against the catalog tables rather than the list's
/// own helpers.
fn list_problem(l: &StateList) -> Option<String> {
    let social: Vec<_> = l.states.iter().filter(|s| oracle::is_social(**s)).collect();
    let distinct: BTreeSet<_> = l.states.iter().collect();
    if !(2..=5).contains(&l.states.len()) {
        Some(format!("size {}", l.states.len()))
    } else if social.len() != 1 || *social[0] != l.social_slot {
        Some(format!("social states {social:?}"))
    } else if distinct.len() != l.states.len() {
        Some("duplicate state".into())
    } else {
        None
    }
}

fn random_profile<R: Rng>(r: &mut R, day: i64) -> Profile {
    // Every fifth profile has coinciding anchors so the widening path runs.
    let mut v: Vec<f64> = (0..4)
        .map(|_| (r.gen_range(30.0..220.0f64) * 2.0).round() / 2.0)
        .collect();
    if r.gen_ratio(1, 5) {
        let i = r.gen_range(0..3);
        v[i + 1] = v[i];
    }
    v.sort_by(f64::total_cmp);
    Profile::new(day, v[0], v[1], v[2], v[3]).expect("sorted anchors in range")
}

fn list_legality() -> Outcome {
    let start = Instant::now();
    let cfg = SensingConfig::default();
    let mut r = rng::stream(1, "acceptance-lists", &[]);
    let mut sizes = BTreeMap::new();
    for i in 0..10_000i64 {
        let window = 2_800_000 + i * 7;
        let off = random_list(window, r.gen());
        if let Some(p) = list_problem(&off) {
            return Err(format!("SensingOff list {:?}: {p}", off.states));
        }
        let now = Timestamp(window * 600);
        let profile = random_profile(&mut r, now.local_day(TzOffset(0)));
        let samples: Vec<Sample> = (1..=r.gen_range(0..20))
            .map(|m| Sample {
                at: now.plus_mins(-m),
                bpm: r.gen_range(40.0..200.0),
            })
            .collect();
        let view = SensorWindow {
            samples: &samples,
            motion: *MotionLabel::ALL.choose(&mut r).expect("labels"),
            profile: r.gen_bool(0.9).then_some(&profile),
            now,
            tz: TzOffset(0),
        };
        let on = sensed_list(&view, window, r.gen(), &cfg);
        if let Some(p) = list_problem(&on) {
            return Err(format!("SensingOn list {:?}: {p}", on.states));
        }
        *sizes.entry(on.states.len()).or_insert(0) += 1;
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!("20000 lists, sensed sizes {sizes:?}, {:.2?}", start.elapsed()))
}

fn arousal_partition() -> Outcome {
    let start = Instant::now();
    let cfg = SensingConfig::default().thresholds;
    let mut r = rng::stream(2, "acceptance-arousal", &[]);
    let mut checked = 0;
    for _ in 0..100 {
        let p = random_profile(&mut r, 0);
        let th = thresholds_or_widened(&p, &cfg);
        let bands = oracle::bands(&p, cfg.kappa, cfg.epsilon);
        let mut previous = ArousalLevel::Low;
        for step in 0..=460 {
            let bpm = 20.0 + 0.5 * step as f64;
            let got = th.classify(bpm);
            let want = oracle::memberships(bpm, bands);
            ensure(want == [got], || {
                format!("{p:?} at {bpm}: classify {got:?}, oracle {want:?}")
            })?;
            ensure(got >= previous, || format!("{p:?}: {previous:?} then {got:?} at {bpm}"))?;
            previous = got;
            checked += 1;
        }
    }
    within(start, Duration::from_secs(5))?;
    Ok(format!("{checked} classifications, {:.2?}", start.elapsed()))
}

fn sim_log(mode: Mode, days: u32, seed: u64) -> Result<EventLog, String> {
    let mut cfg = Config::default();
    cfg.simulation.mode = mode;
    cfg.simulation.days = days;
    cfg.simulation.seed = seed;
    simulate(&cfg).map_err(|e| e.to_string())
}

fn predicate_soundness(log: &EventLog, took: Duration) -> Outcome {
    let report = verify(log);
    let checked = report.checked.get(&Rule::PredicateSoundness).copied().unwrap_or(0);
    let bad = report.count(Rule::PredicateSoundness);
    ensure(checked > 0, || "no sensed non-social shares to check".into())?;
    ensure(bad == 0, || {
        format!("{bad} of {checked} shares fail their predicate\n{report}")
    })?;
    ensure(took < Duration::from_secs(60), || format!("took {took:.2?}"))?;
    Ok(format!(
        "{checked} sensed shares sound over 28 days, {} other violations, {took:.2?}",
        report.violations.len()
    ))
}

fn notification_spacing(logs: &[&EventLog]) -> Outcome {
    let mut gaps = 0;
    let mut min_gap = i64::MAX;
    for log in logs {
        let mut per_user: BTreeMap<UserId, Vec<i64>> = BTreeMap::new();
        for e in &log.entries {
            if let Record::Notified { notification: n } | Record::Dropped { notification: n } = &e.record {
                if n.is_suggestion() {
                    per_user.entry(n.recipient).or_default().push(n.created_at.unix());
                }
            }
        }
        for times in per_user.values() {
            for w in times.windows(2) {
                min_gap = min_gap.min(w[1] - w[0]);
                gaps += 1;
            }
        }
        let v = verify(log).count(Rule::GapFloor);
        ensure(v == 0, || format!("verifier reports {v} gap violations"))?;
    }
    ensure(gaps > 0, || "no suggestion pairs".into())?;
    ensure(min_gap >= 45 * 60, || format!("minimum gap {} min", min_gap / 60))?;
    Ok(format!(
        "{gaps} consecutive suggestion gaps, minimum {} min",
        min_gap / 60
    ))
}

/// Reference model of one pair's react protocol.
#[derive(Debug, Clone, Copy)]
enum Msg {
    Share { recipient: UserId, phase: Phase },
    React,
}

#[derive(Default)]
struct ProtocolTally {
    ops: usize,
    react_to_react: usize,
    double_react: usize,
    illegal_quick: usize,
    off_dag: usize,
    disagreements: usize,
}

fn react_sequence(seed: u64, tally: &mut ProtocolTally) {
    let mut r = rng::stream(seed, "acceptance-react", &[]);
    let (a, b, stranger) = (UserId(1), UserId(2), UserId(3));
    let people = [a, b, a, b, stranger];
    let mut s = InteractionSession::new(PairId(1), a, b);
    let mut model: BTreeMap<MessageId, Msg> = BTreeMap::new();
    let mut next = 1u64;
    for _ in 0..r.gen_range(1..=16) {
        tally.ops += 1;
        let who = *people.choose(&mut r).expect("people");
        let target = MessageId(r.gen_range(1..=next));
        let now = Timestamp(next as i64 * 60);
        let before: BTreeMap<MessageId, Phase> = model
            .iter()
            .filter_map(|(id, m)| match m {
                Msg::Share { phase, .. } => Some((*id, *phase)),
                Msg::React => None,
            })
            .collect();
        let share = |m: &BTreeMap<MessageId, Msg>| match m.get(&target) {
            Some(Msg::Share { recipient, phase }) if *recipient == who => Some(*phase),
            _ => None,
        };
        match r.gen_range(0..5) {
            0 | 1 => {
                let state = *StateKind::ALL.choose(&mut r).expect("states");
                let offered = if r.gen_bool(0.9) {
                    state
                } else {
                    *StateKind::ALL.choose(&mut r).expect("states")
                };
                let source = ShareSource::Suggestion {
                    state: offered,
                    window_id: 0,
                };
                let res = s.share_state(who, state, source, MessageId(next), now);
                let legal = who != stranger && offered == state;
                if res.is_ok() != legal {
                    tally.disagreements += 1;
                }
                if res.is_ok() {
                    let recipient = if who == a { b } else { a };
                    model.insert(
                        MessageId(next),
                        Msg::Share {
                            recipient,
                            phase: Phase::Delivered,
                        },
                    );
                    next += 1;
                }
            }
            2 => {
                let react = *ReactKind::ALL.choose(&mut r).expect("reacts");
                let via = if r.gen_bool(0.5) {
                    ReactVia::Quick
                } else {
                    ReactVia::InApp
                };
                let res = s.send_react(who, target, react, via, MessageId(next), now);
                let phase = share(&model);
                let legal = match (phase, via) {
                    (Some(Phase::Delivered), ReactVia::Quick) => oracle::QUICK.contains(&react),
                    (Some(Phase::Viewed), ReactVia::InApp) => true,
                    _ => false,
                };
                if res.is_ok() {
                    match model.get(&target) {
                        Some(Msg::React) => tally.react_to_react += 1,
                        Some(Msg::Share {
                            phase: Phase::Reacted, ..
                        }) => tally.double_react += 1,
                        _ => {}
                    }
                    if via == ReactVia::Quick && !oracle::QUICK.contains(&react) {
                        tally.illegal_quick += 1;
                    }
                }
                if matches!(model.get(&target), Some(Msg::React))
                    && who != stranger
                    && !matches!(res, Err(InteractionError::ReactToReact(_)))
                {
                    tally.disagreements += 1;
                }
                if res.is_ok() != legal {
                    tally.disagreements += 1;
                }
                if res.is_ok() {
                    if let Some(Msg::Share { phase, .. }) = model.get_mut(&target) {
                        *phase = Phase::Reacted;
                    }
                    model.insert(MessageId(next), Msg::React);
                    next += 1;
                }
            }
            3 => {
                let res = s.view_state(who, target);
                let legal = matches!(share(&model), Some(Phase::Delivered | Phase::Viewed));
                if res.is_ok() != legal {
                    tally.disagreements += 1;
                }
                if let (Ok(_), Some(Msg::Share { phase, .. })) = (&res, model.get_mut(&target)) {
                    *phase = Phase::Viewed;
                }
            }
            _ => {
                let res = s.dont_react(who, target);
                let legal = matches!(share(&model), Some(Phase::Delivered | Phase::Viewed));
                if res.is_ok() != legal {
                    tally.disagreements += 1;
                }
                if let (Ok(_), Some(Msg::Share { phase, .. })) = (&res, model.get_mut(&target)) {
                    *phase = Phase::Dismissed;
                }
            }
        }
        for (id, was) in before {
            let now = s.phase(id);
            let allowed = now == Some(was) || now.is_some_and(|p| oracle_may_become(was, p));
            if !allowed {
                tally.off_dag += 1;
            }
        }
        let engine: Vec<Option<Phase>> = model.keys().map(|id| s.phase(*id)).collect();
        let reference: Vec<Option<Phase>> = model
            .values()
            .map(|m| match m {
                Msg::Share { phase, .. } => Some(*phase),
                Msg::React => None,
            })
            .collect();
        if engine != reference {
            tally.disagreements += 1;
        }
    }
}

/// The phase DAG as drawn: delivered to viewed, either of those to reacted
/// or dismissed.
fn oracle_may_become(from: Phase, to: Phase) -> bool {
    matches!(
        (from, to),
        (Phase::Delivered, Phase::Viewed | Phase::Reacted | Phase::Dismissed)
            | (Phase::Viewed, Phase::Reacted | Phase::Dismissed)
    )
}

fn react_protocol() -> Outcome {
    let mut t = ProtocolTally::default();
    for seed in 0..100_000 {
        react_sequence(seed, &mut t);
    }
    let bad = t.react_to_react + t.double_react + t.illegal_quick + t.off_dag + t.disagreements;
    ensure(bad == 0, || {
        format!(
            "react-to-react {}, double {}, illegal quick {}, off-DAG {}, model disagreements {}",
            t.react_to_react, t.double_react, t.illegal_quick, t.off_dag, t.disagreements
        )
    })?;
    Ok(format!("100000 sequences, {} operations", t.ops))
}

fn mode_contrast() -> Outcome {
    let cfg = SensingConfig::default();
    let tz = TzOffset(-300);
    let seed = 99;
    let profile_for = |day| Profile::new(day, 50.0, 65.0, 95.0, 180.0).expect("valid");
    let mut sizes = [0u64; 4];
    let mut seen_off = BTreeSet::new();
    let mut seen_on = BTreeSet::new();
    for i in 0..5_000i64 {
        let day = 19_800 + i;
        let now = Timestamp::from_local(day, 15 * 60, tz);
        let window = now.window_id();
        let off = random_list(window, seed);
        sizes[off.states.len() - 2] += 1;
        seen_off.extend(off.states.iter().copied().filter(|s| !oracle::is_social(*s)));
        // Sedentary: a steady bpm between resting and walking.
        let samples: Vec<Sample> = (1..=15)
            .map(|m| Sample {
                at: now.plus_mins(-m),
                bpm: 72.5,
            })
            .collect();
        let profile = profile_for(day);
        let view = SensorWindow {
            samples: &samples,
            motion: MotionLabel::Stationary,
            profile: Some(&profile),
            now: otterlink_core::time::window_start(window),
            tz,
        };
        let on = sensed_list(&view, window, seed, &cfg);
        seen_on.extend(on.states.iter().copied().filter(|s| !oracle::is_social(*s)));
        ensure(on.states.len() == 2 && on.states.contains(&StateKind::Neutral), || {
            format!("SensingOn list {:?}", on.states)
        })?;
    }
    ensure(seen_off.len() == 12, || {
        format!("SensingOff covered {} non-social states", seen_off.len())
    })?;
    ensure(seen_on == BTreeSet::from([StateKind::Neutral]), || {
        format!("SensingOn offered {seen_on:?}")
    })?;
    let expected = 5_000.0 / 4.0;
    let stat: f64 = sizes.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(3.0).expect("dof").cdf(stat);
    ensure(p > 0.01, || format!("size counts {sizes:?}, chi2 {stat:.2}, p {p:.4}"))?;
    Ok(format!(
        "sizes {sizes:?}, chi2 {stat:.2}, p {p:.3}; sensing-on always [neutral, social]"
    ))
}

fn determinism_and_durability() -> Outcome {
    let a = sim_log(Mode::SensingOn, 3, 21)?.to_bytes();
    let b = sim_log(Mode::SensingOn, 3, 21)?.to_bytes();
    let c = sim_log(Mode::SensingOff, 3, 21)?.to_bytes();
    let d = sim_log(Mode::SensingOff, 3, 21)?.to_bytes();
    ensure(a == b && c == d, || "same seed produced different logs".into())?;
    ensure(a != sim_log(Mode::SensingOn, 3, 22)?.to_bytes(), || {
        "seed has no effect".into()
    })?;
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (mut crashes, mut torn, mut requests) = (0, 0, 0);
    for i in 0..1_000u64 {
        let dir = root.path().join(i.to_string());
        let stats = run_history(&dir, 2024, i, 80)?;
        crashes += stats.crashes;
        torn += stats.torn;
        requests += stats.requests;
        let _ = std::fs::remove_dir_all(&dir);
    }
    ensure(crashes > 1_000, || format!("only {crashes} crashes exercised"))?;
    Ok(format!(
        "logs byte-identical ({} bytes); 1000 histories, {requests} requests, {crashes} restores ({torn} torn) all equal live",
        a.len()
    ))
}

fn cardinalities() -> Outcome {
    ensure(StateKind::ALL.len() == 15, || {
        format!("{} states", StateKind::ALL.len())
    })?;
    ensure(ReactKind::ALL.len() == 14, || {
        format!("{} reacts", ReactKind::ALL.len())
    })?;
    ensure(ReactKind::QUICK.len() == 4, || {
        format!("{} quick reacts", ReactKind::QUICK.len())
    })?;
    ensure(StateKind::ALL == oracle::TABLE, || "state catalog order".into())?;
    let quick: BTreeSet<_> = ReactKind::QUICK.into_iter().collect();
    ensure(quick == oracle::QUICK.into_iter().collect(), || {
        format!("quick set {quick:?}")
    })?;
    let social: Vec<StateKind> = StateKind::ALL.iter().copied().filter(|s| s.is_social()).collect();
    ensure(social == oracle::SOCIAL, || format!("social states {social:?}"))?;
    Ok("15 states, 14 reacts, 4 quick reacts".into())
}

fn main() {
    let mut failures = 0;
    let mut report = |name: &str, outcome: Outcome| match &outcome {
        Ok(detail) => println!("PASS  {name:<28} {detail}"),
        Err(why) => {
            failures += 1;
            println!("FAIL  {name:<28} {why}");
        }
    };
    report("list legality", list_legality());
    report("arousal partition", arousal_partition());
    let start = Instant::now();
    let on = sim_log(Mode::SensingOn, 28, 28);
    if let Ok(log) = &on {
        verify(log);
    }
    // Simulation plus one verification pass.
    let took = start.elapsed();
    let off = sim_log(Mode::SensingOff, 28, 28);
    match (&on, &off) {
        (Ok(on), Ok(off)) => {
            report("predicate soundness", predicate_soundness(on, took));
            report("notification spacing", notification_spacing(&[on, off]));
        }
        (Err(e), _) | (_, Err(e)) => {
            report("predicate soundness", Err(format!("simulation failed: {e}")));
            report("notification spacing", Err(format!("simulation failed: {e}")));
        }
    }
    report("react protocol", react_protocol());
    report("mode contrast", mode_contrast());
    report("determinism and durability", determinism_and_durability());
    report("cardinalities", cardinalities());
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
