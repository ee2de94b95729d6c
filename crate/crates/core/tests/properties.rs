use proptest::prelude::*;

use otterlink_core::arousal::thresholds_or_widened;
use otterlink_core::notifier::next_suggestion_time;
use otterlink_core::time::window_start;
use otterlink_core::{
    random_list, sensed_list, ArousalLevel, DailySpan, InteractionSession, MessageId, MotionLabel, NotifierConfig,
    PairId, Phase, Profile, ReactKind, ReactVia, Sample, SensingConfig, SensorBuffer, SensorWindow, ShareSource,
    StateKind, ThresholdConfig, Timestamp, TraceEvent, TzOffset, UserId,
};

fn profile() -> impl Strategy<Value = Profile> {
    (prop::array::uniform4(21.0f64..249.0), 0i64..30_000).prop_map(|(mut v, day)| {
        v.sort_by(f64::total_cmp);
        Profile::new(day, v[0], v[1], v[2], v[3]).unwrap()
    })
}

fn level_rank(l: ArousalLevel) -> usize {
    [
        ArousalLevel::Low,
        ArousalLevel::Neutral,
        ArousalLevel::High,
        ArousalLevel::VeryHigh,
    ]
    .iter()
    .position(|&x| x == l)
    .unwrap()
}

proptest! {
    #[test]
    fn bands_partition_the_line(p in profile(), kappa in 0.05f64..=1.0, epsilon in 0.1f64..5.0, a in 0.0f64..300.0, b in 0.0f64..300.0) {
        let cfg = ThresholdConfig { kappa, epsilon, staleness_mins: 15 };
        let t = thresholds_or_widened(&p, &cfg);
        prop_assert!(t.is_strictly_increasing());
        prop_assert!(t.low_upper > p.min_hr);
        // Rank is the number of boundaries at or below the value.
        let rank = |x: f64| [t.low_upper, t.neutral_upper, t.high_upper].iter().filter(|&&u| u <= x).count();
        prop_assert_eq!(level_rank(t.classify(a)), rank(a));
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(t.classify(lo) <= t.classify(hi));
    }

    #[test]
    fn random_lists_are_legal_and_reproducible(window in 0i64..10_000_000, seed: u64) {
        let l = random_list(window, seed);
        prop_assert_eq!(l.check(), Ok(()));
        prop_assert_eq!(random_list(window, seed), l);
    }

    #[test]
    fn sensed_lists_are_legal(
        p in profile(),
        bpms in prop::collection::vec(25.0f64..245.0, 0..20),
        motion in 0usize..4,
        minute in 0u32..1440,
        seed: u64,
    ) {
        let now = Timestamp::from_local(p.day, minute, TzOffset(0));
        let samples: Vec<Sample> = bpms.iter().enumerate().map(|(i, &bpm)| Sample { at: now.plus_mins(-(i as i64) - 1), bpm }).collect();
        let w = SensorWindow { samples: &samples, motion: MotionLabel::ALL[motion], profile: Some(&p), now, tz: TzOffset(0) };
        let l = sensed_list(&w, now.window_id(), seed, &SensingConfig::default());
        prop_assert_eq!(l.check(), Ok(()));
        prop_assert!(l.non_social().count() <= 4);
    }

    /// A window's list depends only on data that arrived before it opened.
    #[test]
    fn later_data_does_not_change_a_window(
        before in prop::collection::vec((0i64..40, 30.0f64..200.0), 1..40),
        after in prop::collection::vec((0i64..40, 30.0f64..200.0, 0usize..4), 0..40),
        seed: u64,
    ) {
        let tz = TzOffset(0);
        let ws = window_start(3_000_000);
        let mut buf = SensorBuffer::new();
        let mut t = ws.plus_mins(-60);
        buf.ingest(&TraceEvent::profile(t, Profile::new(ws.local_day(tz), 50., 65., 95., 180.).unwrap())).unwrap();
        for (dt, bpm) in before {
            t = (t + dt).min(ws + -1);
            buf.ingest(&TraceEvent::hr(t, bpm)).unwrap();
        }
        let cfg = SensingConfig::default();
        let frozen = sensed_list(&buf.window_at(ws, tz), ws.window_id(), seed, &cfg);
        let mut t = ws;
        for (dt, bpm, m) in after {
            t = t + dt;
            buf.ingest(&TraceEvent::hr(t, bpm)).unwrap();
            buf.ingest(&TraceEvent::motion(t, MotionLabel::ALL[m])).unwrap();
            buf.ingest(&TraceEvent::profile(t, Profile::new(ws.local_day(tz), 40., 45., 50., 60.).unwrap())).unwrap();
        }
        prop_assert_eq!(sensed_list(&buf.window_at(ws, tz), ws.window_id(), seed, &cfg), frozen);
    }

    #[test]
    fn suggestions_respect_gap_and_hours(
        last_offset in 0i64..3_000_000,
        delay in 0i64..20_000,
        tz in -720i32..=840,
        start in 0u32..1440,
        len in 60u32..1380,
        gap in 0i64..120,
        jitter in 0i64..90,
        seed: u64,
    ) {
        let cfg = NotifierConfig { min_gap_mins: gap, jitter_mins: jitter, active_hours: DailySpan { start, end: (start + len) % 1440 } };
        let last = Timestamp(1_700_000_000 + last_offset);
        let now = last + delay;
        let next = next_suggestion_time(Some(last), now, TzOffset(tz), seed, &cfg);
        prop_assert!(next >= last.plus_mins(gap));
        prop_assert!(next >= now);
        prop_assert!(cfg.active_hours.contains(next.local_minute_of_day(TzOffset(tz))));
        prop_assert_eq!(next_suggestion_time(Some(last), now, TzOffset(tz), seed, &cfg), next);
    }

    #[test]
    fn phases_only_move_along_the_dag(ops in prop::collection::vec((0u8..4, 0usize..3, 1u64..8, 0usize..14, any::<bool>()), 1..60)) {
        let users = [UserId(1), UserId(2), UserId(3)];
        let mut s = InteractionSession::new(PairId(1), users[0], users[1]);
        let mut next = 1u64;
        for (op, who, target, react, quick) in ops {
            let before: Vec<(MessageId, Phase)> = (1..next).filter_map(|i| s.phase(MessageId(i)).map(|p| (MessageId(i), p))).collect();
            let who = users[who];
            let target = MessageId(target);
            let now = Timestamp(next as i64);
            let created = match op {
                0 => s.share_state(who, StateKind::Calm, ShareSource::Suggestion { state: StateKind::Calm, window_id: 0 }, MessageId(next), now).is_ok(),
                1 => s.view_state(who, target).map(|_| false).unwrap_or(false),
                2 => {
                    let via = if quick { ReactVia::Quick } else { ReactVia::InApp };
                    let sent = s.send_react(who, target, ReactKind::ALL[react], via, MessageId(next), now);
                    if let Ok(m) = &sent {
                        prop_assert!(s.message(m.react().unwrap().1).unwrap().is_state_share());
                        prop_assert!(via == ReactVia::InApp || m.react().unwrap().0.is_quick());
                    }
                    sent.is_ok()
                }
                _ => s.dont_react(who, target).map(|_| false).unwrap_or(false),
            };
            if created {
                next += 1;
            }
            for (id, was) in before {
                let now = s.phase(id).unwrap();
                prop_assert!(now == was || was.may_become(now), "{:?} -> {:?}", was, now);
                prop_assert!(!was.is_terminal() || now == was);
            }
        }
        let shares = s.log().iter().filter(|m| m.is_state_share()).count();
        prop_assert_eq!(s.reacted_count(), s.log().len() - shares);
    }
}
