//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use twostep::explore::{explore_small_model, AdversaryMenu, ExploreBounds};
use twostep::protocol::{Message, Mutation};
use twostep::runner::{
    batch_with, campaign, campaign_scenario, rerun_doubled, run_scenario, slow_network_scenario, BatchSummary,
    StrategyKind,
};
use twostep::scenario::ScenarioConfig;
use twostep::trace::TraceEvent;
use twostep::verifier::{CheckKind, CheckStatus};

/// Schedules in the depth-3 space once committed suffixes collapse.
const DEPTH_THREE_SCHEDULES: u64 = 7_399_795;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn fast_path() -> Outcome {
    let mut details = Vec::new();
    for f in 1..=3 {
        let start = Instant::now();
        let report = run_scenario(&ScenarioConfig::new(f)).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        let n = 5 * f + 1;
        let m = &report.verdict.metrics;
        ensure(m.commits.len() == n, format!("f={f}: {} of {n} committed", m.commits.len()))?;
        ensure(
            m.commits.values().all(|c| c.round == 1 && c.time == 2),
            format!("f={f}: commit not in round 1 at tick 2"),
        )?;
        ensure(m.messages_sent == n + n * n, format!("f={f}: {} messages, want {}", m.messages_sent, n + n * n))?;
        ensure(
            report.verdict.status(CheckKind::TwoStep) == Some(CheckStatus::Pass),
            format!("f={f}: two-step check did not pass"),
        )?;
        ensure(elapsed < Duration::from_secs(1), format!("f={f}: took {elapsed:?}"))?;
        details.push(format!("f={f} msgs={}", m.messages_sent));
    }
    Ok(format!("commit t=2 in round 1; {}", details.join(", ")))
}

struct Campaigns {
    runs: Vec<(StrategyKind, usize, BatchSummary)>,
    elapsed: Duration,
}

fn run_campaigns() -> Campaigns {
    let start = Instant::now();
    let mut runs = Vec::new();
    for (f, seeds) in [(1, 1000), (2, 200)] {
        for kind in StrategyKind::ALL {
            runs.push((kind, f, campaign(kind, f, 0..seeds, Mutation::None)));
        }
    }
    Campaigns { runs, elapsed: start.elapsed() }
}

fn safety(c: &Campaigns) -> Outcome {
    let mut total = 0;
    for (kind, f, s) in &c.runs {
        total += s.len();
        ensure(s.errors() == 0, format!("{} f={f}: {} runs errored", kind.as_str(), s.errors()))?;
        for check in [CheckKind::Agreement, CheckKind::LockIn] {
            let fails = s.count(check, CheckStatus::Fail);
            ensure(fails == 0, format!("{} f={f}: {fails} {} failures", kind.as_str(), check.as_str()))?;
            ensure(s.count(check, CheckStatus::Pass) == s.len(), format!("{} f={f}: {} not run", kind.as_str(), check.as_str()))?;
        }
    }
    ensure(c.elapsed < Duration::from_secs(300), format!("campaigns took {:?}", c.elapsed))?;
    Ok(format!("{total} runs, 0 agreement / 0 lock-in failures, {:.1?}", c.elapsed))
}

fn liveness(c: &Campaigns) -> Outcome {
    let mut total = 0;
    let mut inconclusive = 0;
    let mut worst: BTreeMap<usize, u64> = BTreeMap::new();
    for (kind, f, s) in &c.runs {
        total += s.len();
        let fails = s.count(CheckKind::Liveness, CheckStatus::Fail);
        ensure(fails == 0, format!("{} f={f}: {fails} liveness failures", kind.as_str()))?;
        let seeds = s.inconclusive_seeds();
        inconclusive += seeds.len();
        if !seeds.is_empty() {
            let again = rerun_doubled(&seeds, |seed| campaign_scenario(*kind, *f, seed, Mutation::None));
            ensure(
                again.count(CheckKind::Liveness, CheckStatus::Pass) == seeds.len(),
                format!("{} f={f}: doubled horizon left seeds unresolved", kind.as_str()),
            )?;
        }
        let w = s.results.iter().filter_map(|r| r.max_commit_round).max().unwrap_or(0);
        let e = worst.entry(*f).or_default();
        *e = (*e).max(w);
    }
    ensure(inconclusive * 100 <= total, format!("{inconclusive}/{total} runs inconclusive"))?;
    let worst: Vec<String> = worst.iter().map(|(f, r)| format!("f={f} latest commit round {r}")).collect();
    Ok(format!("{total} runs within r_ok+f+2, {inconclusive} inconclusive; {}", worst.join(", ")))
}

fn faulty_leader_commit() -> Outcome {
    let scenario = ScenarioConfig::parse(include_str!("../scenarios/faulty_leader_commit.toml")).map_err(|e| e.to_string())?;
    let report = run_scenario(&scenario).map_err(|e| e.to_string())?;
    let records = &report.trace.records;
    let proposals_r2 = records
        .iter()
        .filter(|r| match &r.event {
            TraceEvent::Proposed { proposal, .. } => proposal.round == 2,
            TraceEvent::MessageSent { message: Message::Proposal(p), .. }
            | TraceEvent::MessageDelivered { message: Message::Proposal(p), .. } => p.round == 2,
            _ => false,
        })
        .count();
    ensure(proposals_r2 == 0, format!("{proposals_r2} round-2 proposal records"))?;
    let carried = records
        .iter()
        .filter(|r| matches!(&r.event, TraceEvent::Voted { vote, .. } if vote.round == 1 && vote.value == "v0".into()))
        .count();
    ensure(carried >= 5, format!("only {carried} round-1 votes for v0"))?;
    let commits: Vec<_> = records
        .iter()
        .filter_map(|r| match &r.event {
            TraceEvent::Committed { node, round, value } if !scenario.is_faulty(*node) => Some((r.time, *round, value.clone())),
            _ => None,
        })
        .collect();
    ensure(commits.len() == 5, format!("{} honest commits", commits.len()))?;
    ensure(
        commits.iter().all(|c| *c == (51, 2, "v0".into())),
        format!("unexpected commits {commits:?}"),
    )?;
    ensure(report.verdict.exit_code() == 0, "verdict not clean")?;
    Ok("5 honest commits of v0 in round 2 at t=51, no round-2 proposal".into())
}

fn crashed_leader() -> Outcome {
    let scenario = ScenarioConfig::parse(include_str!("../scenarios/crashed_leader.toml")).map_err(|e| e.to_string())?;
    let report = run_scenario(&scenario).map_err(|e| e.to_string())?;
    let votes: Vec<_> = report
        .trace
        .records
        .iter()
        .filter_map(|r| match &r.event {
            TraceEvent::Voted { node, vote } if vote.round == 1 => Some((*node, vote.value.clone())),
            _ => None,
        })
        .collect();
    ensure(votes.len() == 5 && votes.iter().all(|(_, v)| v.is_empty()), format!("round-1 votes {votes:?}"))?;
    let expected = scenario.to_commit_base + 2;
    let m = &report.verdict.metrics;
    ensure(m.commits.len() == 5, format!("{} honest commits", m.commits.len()))?;
    ensure(
        m.commits.values().all(|c| c.round == 2 && c.time == expected),
        format!("commits {:?}", m.commits),
    )?;
    Ok(format!("all vote empty in round 1, commit in round 2 at t={expected}"))
}

fn exhaustive() -> Outcome {
    let start = Instant::now();
    let crash = explore_small_model(&ExploreBounds { menu: AdversaryMenu::CrashOnly, ..ExploreBounds::new(2) })
        .map_err(|e| e.to_string())?;
    ensure(crash.passed(), "crash-only depth 2 failed")?;
    let zero = explore_small_model(&ExploreBounds::new(0)).map_err(|e| e.to_string())?;
    ensure(zero.schedules == 1 && zero.passed(), "depth 0 is not a single vacuous schedule")?;
    let one = explore_small_model(&ExploreBounds::new(1)).map_err(|e| e.to_string())?;
    ensure(one.passed(), "depth 1 failed")?;
    let a = explore_small_model(&ExploreBounds::new(2)).map_err(|e| e.to_string())?;
    let b = explore_small_model(&ExploreBounds::new(2)).map_err(|e| e.to_string())?;
    ensure(a.passed(), format!("depth 2: {}", a.counterexample.map(|c| c.to_string()).unwrap_or_default()))?;
    ensure(a.schedules == b.schedules, "depth-2 count changed between runs")?;
    let deep = explore_small_model(&ExploreBounds::new(3)).map_err(|e| e.to_string())?;
    ensure(deep.passed(), format!("depth 3: {}", deep.counterexample.map(|c| c.to_string()).unwrap_or_default()))?;
    ensure(
        deep.schedules == DEPTH_THREE_SCHEDULES,
        format!("depth-3 count {} differs from {DEPTH_THREE_SCHEDULES}", deep.schedules),
    )?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(600), format!("took {elapsed:?}"))?;
    Ok(format!(
        "depth 1: {} schedules, depth 2: {} schedules (twice), depth 3: {} schedules, all pass, {elapsed:.1?}",
        one.schedules, a.schedules, deep.schedules
    ))
}

fn mutations() -> Outcome {
    let weak = explore_small_model(&ExploreBounds { mutation: Mutation::WeakCommitQuorum, ..ExploreBounds::new(2) })
        .map_err(|e| e.to_string())?;
    ensure(!weak.passed(), "3f+1 commit quorum not detected")?;

    let detected = |m: Mutation, check: CheckKind| -> usize {
        StrategyKind::ALL
            .into_iter()
            .map(|k| campaign(k, 1, 0..1000, m).count(check, CheckStatus::Fail))
            .sum()
    };
    let unconstrained = detected(Mutation::NoProposalConstraint, CheckKind::LockIn);
    ensure(unconstrained > 0, "dropped 2f+1 constraint not detected")?;
    let fixed_campaign = detected(Mutation::NoTimeoutDoubling, CheckKind::Liveness);
    let slow = batch_with(0..100, |seed| slow_network_scenario(seed, Mutation::NoTimeoutDoubling));
    let fixed_slow = slow.count(CheckKind::Liveness, CheckStatus::Fail);
    ensure(fixed_campaign + fixed_slow > 0, "missing timeout doubling not detected")?;
    let healthy = batch_with(0..100, |seed| slow_network_scenario(seed, Mutation::None));
    ensure(healthy.exit_code() == 0, "unmutated slow-network runs failed")?;
    Ok(format!(
        "3f+1 quorum: {} agreement / {} lock-in failing schedules; no 2f+1 constraint: {unconstrained} lock-in failures; \
         no doubling: {fixed_campaign} campaign + {fixed_slow}/100 slow-network liveness failures",
        weak.agreement_failures, weak.lock_in_failures
    ))
}

fn determinism() -> Outcome {
    let mut scenarios: Vec<ScenarioConfig> = [
        include_str!("../scenarios/fast_path.toml"),
        include_str!("../scenarios/crashed_leader.toml"),
        include_str!("../scenarios/faulty_leader_commit.toml"),
        include_str!("../scenarios/validity_gap.toml"),
        include_str!("../scenarios/hostile_equivocation.toml"),
        include_str!("../scenarios/slow_network.toml"),
    ]
    .iter()
    .map(|t| ScenarioConfig::parse(t).expect("bundled scenarios parse"))
    .collect();
    for kind in StrategyKind::ALL {
        for f in [1, 2] {
            for seed in [0, 17, 99] {
                scenarios.push(campaign_scenario(kind, f, seed, Mutation::None));
            }
        }
    }
    for s in &scenarios {
        let a = run_scenario(s).map_err(|e| e.to_string())?;
        let b = run_scenario(s).map_err(|e| e.to_string())?;
        ensure(a.trace.to_text() == b.trace.to_text(), format!("trace differs for seed {}", s.seed))?;
        ensure(a.verdict.render() == b.verdict.render(), format!("verdict differs for seed {}", s.seed))?;
    }
    Ok(format!("{} scenarios, byte-identical traces and verdicts", scenarios.len()))
}

fn quorum_arithmetic() -> Outcome {
    for f in 1..=4u32 {
        let n = 5 * f + 1;
        let q = 4 * f + 1;
        let quorums: Vec<u32> = (0u32..1 << n).filter(|m| m.count_ones() == q).collect();
        let mut min_overlap = n;
        for (i, a) in quorums.iter().enumerate() {
            for b in &quorums[i..] {
                min_overlap = min_overlap.min((a & b).count_ones());
            }
        }
        ensure(min_overlap == 3 * f + 1, format!("f={f}: smallest overlap {min_overlap}"))?;
        // With f faulty members removed, what remains of two disjoint
        // quorums would need 6f+2 distinct nodes.
        ensure(2 * (q - f) == 6 * f + 2 && 6 * f + 2 > n, format!("f={f}: disjoint count"))?;
        ensure(min_overlap - f >= 2 * f + 1, format!("f={f}: honest overlap"))?;
    }
    Ok("f=1..4: quorum overlap >= 3f+1, disjoint quorums need 6f+2 > n".into())
}

fn main() -> ExitCode {
    let campaigns = run_campaigns();
    let criteria: Vec<Criterion> = vec![
        ("1 two-step fast path", Box::new(fast_path)),
        ("2 safety under adversarial campaigns", Box::new(|| safety(&campaigns))),
        ("3 liveness bound", Box::new(|| liveness(&campaigns))),
        ("4 faulty-leader commit", Box::new(faulty_leader_commit)),
        ("5 crashed-leader recovery", Box::new(crashed_leader)),
        ("6 bounded-exhaustive small model", Box::new(exhaustive)),
        ("7 mutation sensitivity", Box::new(mutations)),
        ("8 determinism", Box::new(determinism)),
        ("9 quorum arithmetic", Box::new(quorum_arithmetic)),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
