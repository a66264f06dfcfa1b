use std::collections::{BTreeMap, HashMap};

use proptest::prelude::*;

use twostep::protocol::{Mutation, TimerKind};
use twostep::runner::{campaign_scenario, run_scenario, StrategyKind};
use twostep::scenario::ScenarioConfig;
use twostep::sim;
use twostep::trace::{Trace, TraceEvent};
use twostep::verifier::{check_agreement, check_lock_in, CheckStatus};

fn strategy() -> impl Strategy<Value = StrategyKind> {
    prop::sample::select(StrategyKind::ALL.to_vec())
}

fn scenario() -> impl Strategy<Value = ScenarioConfig> {
    (strategy(), 1usize..=2, any::<u64>()).prop_map(|(kind, f, seed)| campaign_scenario(kind, f, seed, Mutation::None))
}

fn trace_of(s: &ScenarioConfig) -> Trace {
    sim::run(s).expect("campaign scenarios are valid")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn runs_are_deterministic_and_round_trip(s in scenario()) {
        let a = run_scenario(&s).unwrap();
        let b = run_scenario(&s).unwrap();
        let text = a.trace.to_text();
        prop_assert_eq!(&text, &b.trace.to_text());
        prop_assert_eq!(a.verdict.render(), b.verdict.render());
        let parsed = Trace::parse(&text).unwrap();
        prop_assert_eq!(parsed.to_text(), text);
        prop_assert_eq!(&parsed, &a.trace);
    }

    #[test]
    fn delays_respect_partial_synchrony(s in scenario()) {
        let t = trace_of(&s);
        let faulty = s.faulty_set();
        for r in &t.records {
            if let TraceEvent::MessageSent { from, to, deliver_at, .. } = &r.event {
                prop_assert!(*deliver_at > r.time);
                let honest = !faulty.contains(from) && !faulty.contains(to);
                if honest && r.time >= s.gst {
                    prop_assert!(*deliver_at <= r.time + s.delta, "{}", r.to_line());
                }
            }
        }
    }

    #[test]
    fn every_delivery_was_sent_and_time_is_monotone(s in scenario()) {
        let t = trace_of(&s);
        let mut in_flight: HashMap<String, usize> = HashMap::new();
        let mut last = 0;
        for r in &t.records {
            prop_assert!(r.time >= last);
            last = r.time;
            match &r.event {
                TraceEvent::MessageSent { from, to, deliver_at, message } => {
                    *in_flight.entry(format!("{from}>{to}@{}:{deliver_at}:{message:?}", r.time)).or_default() += 1;
                }
                TraceEvent::MessageDelivered { from, to, sent_at, message } => {
                    let key = format!("{from}>{to}@{sent_at}:{}:{message:?}", r.time);
                    let slot = in_flight.get_mut(&key);
                    prop_assert!(slot.as_deref().is_some_and(|c| *c > 0), "unsent delivery {}", r.to_line());
                    *slot.unwrap() -= 1;
                }
                _ => {}
            }
        }
    }

    #[test]
    fn vote_timer_precedes_commit_timer(s in scenario()) {
        let t = trace_of(&s);
        let mut vote_at: BTreeMap<(usize, u64), u64> = BTreeMap::new();
        for r in &t.records {
            if let TraceEvent::TimerArmed { node, kind, round, fires_at } = &r.event {
                match kind {
                    TimerKind::Vote => {
                        vote_at.insert((*node, *round), *fires_at);
                    }
                    TimerKind::Commit => {
                        let v = vote_at.get(&(*node, *round)).copied();
                        prop_assert!(v.is_some_and(|v| v < *fires_at), "{}", r.to_line());
                    }
                }
            }
        }
    }

    #[test]
    fn safety_holds_on_random_runs(s in scenario()) {
        let t = trace_of(&s);
        prop_assert_eq!(check_agreement(&t).status, CheckStatus::Pass);
        prop_assert_eq!(check_lock_in(&t).status, CheckStatus::Pass);
    }

    #[test]
    fn scenarios_round_trip_through_toml(s in scenario()) {
        let text = s.render();
        prop_assert_eq!(ScenarioConfig::parse(&text).unwrap(), s);
    }
}
