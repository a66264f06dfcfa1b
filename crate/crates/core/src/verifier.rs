//! Oracles over finished traces.
//!
//! Every check is a pure function of a [`Trace`]. Faulty nodes' own commits
//! and votes are ignored throughout. A failing check carries the trace
//! records that prove it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::protocol::{Message, NodeId, Round, Value};
use crate::trace::{StopReason, Trace, TraceEvent, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Agreement,
    LockIn,
    ValidityStrict,
    ValidityWeak,
    TwoStep,
    Liveness,
}

impl CheckKind {
    pub const ALL: [CheckKind; 6] = [
        CheckKind::Agreement,
        CheckKind::LockIn,
        CheckKind::ValidityStrict,
        CheckKind::ValidityWeak,
        CheckKind::TwoStep,
        CheckKind::Liveness,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CheckKind::Agreement => "agreement",
            CheckKind::LockIn => "lock_in",
            CheckKind::ValidityStrict => "validity_strict",
            CheckKind::ValidityWeak => "validity_weak",
            CheckKind::TwoStep => "two_step",
            CheckKind::Liveness => "liveness",
        }
    }

    /// Agreement and lock-in are the safety properties.
    pub fn is_safety(&self) -> bool {
        matches!(self, CheckKind::Agreement | CheckKind::LockIn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
    /// The run ended before the property could be decided.
    Inconclusive,
}

impl CheckStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::NotApplicable => "not_applicable",
            CheckStatus::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    pub kind: CheckKind,
    pub status: CheckStatus,
    /// Indexed trace records backing the status.
    pub witness: Vec<(usize, TraceRecord)>,
    pub note: Option<String>,
}

impl CheckResult {
    fn pass(kind: CheckKind) -> Self {
        CheckResult { kind, status: CheckStatus::Pass, witness: Vec::new(), note: None }
    }

    fn with(kind: CheckKind, status: CheckStatus, note: impl Into<String>) -> Self {
        CheckResult { kind, status, witness: Vec::new(), note: Some(note.into()) }
    }

    fn fail(kind: CheckKind, note: impl Into<String>, witness: Vec<(usize, TraceRecord)>) -> Self {
        debug_assert!(!witness.is_empty());
        CheckResult { kind, status: CheckStatus::Fail, witness, note: Some(note.into()) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitInfo {
    pub round: Round,
    pub time: u64,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metrics {
    /// First commit of each honest node.
    pub commits: BTreeMap<NodeId, CommitInfo>,
    pub messages_sent: usize,
    pub stop: StopReason,
    pub end_time: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub checks: Vec<CheckResult>,
    pub metrics: Metrics,
}

impl Verdict {
    pub fn get(&self, kind: CheckKind) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.kind == kind)
    }

    pub fn status(&self, kind: CheckKind) -> Option<CheckStatus> {
        self.get(kind).map(|c| c.status)
    }

    pub fn safety_failed(&self) -> bool {
        self.checks
            .iter()
            .any(|c| c.status == CheckStatus::Fail && (c.kind.is_safety() || matches!(c.kind, CheckKind::ValidityStrict | CheckKind::ValidityWeak)))
    }

    pub fn liveness_failed(&self) -> bool {
        self.checks
            .iter()
            .any(|c| c.status == CheckStatus::Fail && matches!(c.kind, CheckKind::Liveness | CheckKind::TwoStep))
    }

    pub fn inconclusive(&self) -> bool {
        self.checks.iter().any(|c| c.status == CheckStatus::Inconclusive)
    }

    /// 0 pass, 1 safety or validity failure, 2 liveness or fast-path
    /// failure, 4 inconclusive.
    pub fn exit_code(&self) -> i32 {
        if self.safety_failed() {
            1
        } else if self.liveness_failed() {
            2
        } else if self.inconclusive() {
            4
        } else {
            0
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = write!(out, "check {} status={}", c.kind.as_str(), c.status.as_str());
            if let Some(note) = &c.note {
                let _ = write!(out, " note={note:?}");
            }
            out.push('\n');
            for (i, rec) in &c.witness {
                let _ = writeln!(out, "  witness #{i} {}", rec.to_line());
            }
        }
        let m = &self.metrics;
        let _ = writeln!(
            out,
            "metric messages_sent={} stop={:?} end={}",
            m.messages_sent, m.stop, m.end_time
        );
        for (node, c) in &m.commits {
            let _ = writeln!(
                out,
                "metric commit node={node} round={} time={} value={}",
                c.round,
                c.time,
                crate::trace::encode_value(&c.value)
            );
        }
        out
    }
}

/// Runs the checks listed in the trace's scenario.
pub fn verify(trace: &Trace) -> Verdict {
    verify_checks(trace, &trace.scenario.checks)
}

pub fn verify_checks(trace: &Trace, checks: &[CheckKind]) -> Verdict {
    let mut kinds: Vec<CheckKind> = checks.to_vec();
    kinds.sort();
    kinds.dedup();
    let checks = kinds
        .into_iter()
        .map(|k| match k {
            CheckKind::Agreement => check_agreement(trace),
            CheckKind::LockIn => check_lock_in(trace),
            CheckKind::ValidityStrict => check_validity_strict(trace),
            CheckKind::ValidityWeak => check_validity_weak(trace),
            CheckKind::TwoStep => check_two_step(trace),
            CheckKind::Liveness => check_liveness(trace),
        })
        .collect();
    Verdict { checks, metrics: metrics(trace) }
}

fn honest_commits(trace: &Trace) -> impl Iterator<Item = (usize, &TraceRecord, NodeId, Round, &Value)> {
    trace.records.iter().enumerate().filter_map(move |(i, r)| match &r.event {
        TraceEvent::Committed { node, round, value } if !trace.scenario.is_faulty(*node) => {
            Some((i, r, *node, *round, value))
        }
        _ => None,
    })
}

pub fn metrics(trace: &Trace) -> Metrics {
    let mut commits = BTreeMap::new();
    for (_, r, node, round, value) in honest_commits(trace) {
        commits.entry(node).or_insert(CommitInfo { round, time: r.time, value: value.clone() });
    }
    Metrics {
        commits,
        messages_sent: trace.messages_sent(),
        stop: trace.outcome.stop,
        end_time: trace.outcome.end_time,
    }
}

/// All honest commits carry one value.
pub fn check_agreement(trace: &Trace) -> CheckResult {
    let kind = CheckKind::Agreement;
    let mut first: Option<(usize, &TraceRecord, &Value)> = None;
    for (i, r, _, _, value) in honest_commits(trace) {
        match first {
            None => first = Some((i, r, value)),
            Some((j, fr, v)) if v != value => {
                return CheckResult::fail(
                    kind,
                    format!("conflicting commits {v} and {value}"),
                    vec![(j, fr.clone()), (i, r.clone())],
                );
            }
            Some(_) => {}
        }
    }
    CheckResult::pass(kind)
}

/// After the earliest commit of `b` in round `r*`, honest nodes that voted
/// `b` in `r*` vote only `b`, and every later commit is `b`.
pub fn check_lock_in(trace: &Trace) -> CheckResult {
    let kind = CheckKind::LockIn;
    let Some((ci, crec, _, r_star, b)) = honest_commits(trace).min_by_key(|(i, _, _, round, _)| (*round, *i)) else {
        return CheckResult::pass(kind);
    };
    let b = b.clone();
    let mut quorum: BTreeMap<NodeId, (usize, &TraceRecord)> = BTreeMap::new();
    for (i, r) in trace.records.iter().enumerate() {
        if let TraceEvent::Voted { node, vote } = &r.event {
            if vote.round == r_star && vote.value == b && !trace.scenario.is_faulty(*node) {
                quorum.entry(*node).or_insert((i, r));
            }
        }
    }
    for (i, r) in trace.records.iter().enumerate() {
        match &r.event {
            TraceEvent::Voted { node, vote } if vote.round > r_star && vote.value != b => {
                if let Some(&(qi, qr)) = quorum.get(node) {
                    return CheckResult::fail(
                        kind,
                        format!("node {node} voted {b} in round {r_star} after a commit, then {} in round {}", vote.value, vote.round),
                        vec![(ci, crec.clone()), (qi, qr.clone()), (i, r.clone())],
                    );
                }
            }
            TraceEvent::Committed { node, round, value }
                if *round > r_star && *value != b && !trace.scenario.is_faulty(*node) =>
            {
                return CheckResult::fail(
                    kind,
                    format!("{value} committed in round {round} after {b} in round {r_star}"),
                    vec![(ci, crec.clone()), (i, r.clone())],
                );
            }
            _ => {}
        }
    }
    CheckResult::pass(kind)
}

/// Every honest commit is some node's initial value. Not applicable, but
/// still witnessed, when a faulty leader could propose arbitrary values.
pub fn check_validity_strict(trace: &Trace) -> CheckResult {
    let kind = CheckKind::ValidityStrict;
    let initials: BTreeSet<Value> = trace.scenario.initial_value_list().into_iter().collect();
    let bad: Vec<(usize, TraceRecord)> = honest_commits(trace)
        .filter(|(_, _, _, _, v)| !initials.contains(*v))
        .map(|(i, r, ..)| (i, r.clone()))
        .take(1)
        .collect();
    if bad.is_empty() {
        return CheckResult::pass(kind);
    }
    let unconstrained: Vec<NodeId> = trace
        .scenario
        .adversary
        .faulty
        .iter()
        .filter(|f| f.strategy.proposes_unconstrained())
        .map(|f| f.node)
        .collect();
    let TraceEvent::Committed { value, .. } = &bad[0].1.event else { unreachable!() };
    let note = format!("committed {value} is no node's initial value");
    if unconstrained.is_empty() {
        CheckResult::fail(kind, note, bad)
    } else {
        CheckResult {
            kind,
            status: CheckStatus::NotApplicable,
            witness: bad,
            note: Some(format!("{note}; faulty leader(s) {unconstrained:?} may propose unconstrained values")),
        }
    }
}

/// Every honest commit was carried by some proposal in the trace.
pub fn check_validity_weak(trace: &Trace) -> CheckResult {
    let kind = CheckKind::ValidityWeak;
    let proposed: BTreeSet<&Value> = trace
        .records
        .iter()
        .filter_map(|r| match &r.event {
            TraceEvent::Proposed { proposal, .. } => Some(&proposal.value),
            _ => None,
        })
        .collect();
    match honest_commits(trace).find(|(_, _, _, _, v)| !proposed.contains(v)) {
        None => CheckResult::pass(kind),
        Some((i, r, _, _, v)) => CheckResult::fail(kind, format!("{v} was never proposed"), vec![(i, r.clone())]),
    }
}

/// Fault-free, stable runs commit in round 1 after one proposal delivery
/// and one vote exchange, before any timer fires.
pub fn check_two_step(trace: &Trace) -> CheckResult {
    let kind = CheckKind::TwoStep;
    let s = &trace.scenario;
    if !s.adversary.faulty.is_empty() {
        return CheckResult::with(kind, CheckStatus::NotApplicable, "scenario has faulty nodes");
    }
    if s.gst > 0 || !s.adversary.network.rules.is_empty() {
        return CheckResult::with(kind, CheckStatus::NotApplicable, "scenario has pre-GST or scripted delays");
    }
    let n = s.n();
    // Per node: index of the proposal delivery it voted on, its own vote,
    // and its commit.
    let mut proposal_step: Vec<Option<usize>> = vec![None; n];
    let mut last_delivery: Vec<Option<(usize, bool)>> = vec![None; n];
    let mut timer_before: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    for (i, r) in trace.records.iter().enumerate() {
        match &r.event {
            TraceEvent::MessageDelivered { to, message, .. } => {
                let is_round1_proposal = matches!(message, Message::Proposal(p) if p.round == 1);
                last_delivery[*to] = Some((i, is_round1_proposal));
            }
            TraceEvent::Voted { node, vote } if vote.round == 1 && proposal_step[*node].is_none() => {
                if let Some((di, true)) = last_delivery[*node] {
                    if trace.records[di].time == r.time {
                        proposal_step[*node] = Some(di);
                    }
                }
            }
            TraceEvent::TimerFired { node, .. } if !done[*node] && timer_before[*node].is_none() => {
                timer_before[*node] = Some(i);
            }
            TraceEvent::Committed { node, round, .. } => {
                done[*node] = true;
                let mut witness = vec![(i, r.clone())];
                if *round != 1 {
                    return CheckResult::fail(kind, format!("node {node} committed in round {round}"), witness);
                }
                if let Some(ti) = timer_before[*node] {
                    witness.insert(0, (ti, trace.records[ti].clone()));
                    return CheckResult::fail(kind, format!("node {node} needed a timer before committing"), witness);
                }
                if proposal_step[*node].is_none() {
                    return CheckResult::fail(kind, format!("node {node} committed without voting on a proposal"), witness);
                }
            }
            _ => {}
        }
    }
    if let Some(node) = (0..n).find(|&i| !done[i]) {
        let witness: Vec<_> = timer_before[node]
            .map(|ti| vec![(ti, trace.records[ti].clone())])
            .unwrap_or_default();
        if witness.is_empty() {
            return CheckResult::with(kind, CheckStatus::Inconclusive, format!("run ended before node {node} committed"));
        }
        return CheckResult::fail(kind, format!("node {node} did not commit on the fast path"), witness);
    }
    CheckResult::pass(kind)
}

/// First round whose start is at or after GST and whose timeouts, under the
/// doubling contract, fit a full proposal and vote exchange.
pub fn r_ok(trace: &Trace) -> Option<Round> {
    let s = &trace.scenario;
    let cfg = s.config().ok()?;
    let two_delta = s.delta.saturating_mul(2);
    (1..=64).find(|&r| {
        cfg.round_entry(r) >= s.gst
            && cfg.to_vote(r) >= two_delta
            && cfg.to_commit(r) >= cfg.to_vote(r).saturating_add(two_delta)
    })
}

/// Every honest node commits by round `r_ok + f + 2`.
pub fn check_liveness(trace: &Trace) -> CheckResult {
    let kind = CheckKind::Liveness;
    let s = &trace.scenario;
    let Some(r_ok) = r_ok(trace) else {
        return CheckResult::with(kind, CheckStatus::NotApplicable, "no round satisfies the timeout margins");
    };
    let bound = r_ok + s.f as u64 + 2;
    let honest = s.honest_nodes();
    let mut first_commit: BTreeMap<NodeId, (usize, Round)> = BTreeMap::new();
    // Index of the first record where an honest node enters round bound+1.
    let mut late_entry: BTreeMap<NodeId, usize> = BTreeMap::new();
    for (i, r) in trace.records.iter().enumerate() {
        match &r.event {
            TraceEvent::Committed { node, round, .. } if !s.is_faulty(*node) => {
                first_commit.entry(*node).or_insert((i, *round));
            }
            TraceEvent::RoundEntered { node, round } if *round == bound + 1 && !s.is_faulty(*node) => {
                late_entry.entry(*node).or_insert(i);
            }
            _ => {}
        }
    }
    if let Some((_, &(i, round))) = first_commit.iter().find(|(_, (_, round))| *round > bound) {
        return CheckResult::fail(
            kind,
            format!("commit in round {round} exceeds r_ok + f + 2 = {bound}"),
            vec![(i, trace.records[i].clone())],
        );
    }
    let missing: Vec<NodeId> = honest.iter().copied().filter(|n| !first_commit.contains_key(n)).collect();
    if missing.is_empty() {
        return CheckResult::pass(kind);
    }
    let passed_bound: Vec<(usize, TraceRecord)> = missing
        .iter()
        .filter_map(|n| late_entry.get(n))
        .map(|&i| (i, trace.records[i].clone()))
        .take(1)
        .collect();
    if !passed_bound.is_empty() {
        return CheckResult::fail(
            kind,
            format!("nodes {missing:?} had not committed by the end of round {bound}"),
            passed_bound,
        );
    }
    CheckResult::with(
        kind,
        CheckStatus::Inconclusive,
        format!("horizon too short: run ended before round {bound} completed"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{FaultyNode, NodeStrategy};
    use crate::protocol::{Lockset, Proposal, Vote};
    use crate::scenario::ScenarioConfig;
    use crate::sim;
    use crate::trace::RunOutcome;

    fn rec(time: u64, event: TraceEvent) -> TraceRecord {
        TraceRecord { time, event }
    }

    fn commit(node: NodeId, round: Round, value: &str) -> TraceEvent {
        TraceEvent::Committed { node, round, value: value.into() }
    }

    fn voted(node: NodeId, round: Round, value: &str) -> TraceEvent {
        TraceEvent::Voted { node, vote: Vote { round, value: value.into(), sender: node } }
    }

    fn trace_of(scenario: ScenarioConfig, events: Vec<TraceEvent>) -> Trace {
        let records: Vec<_> = events.into_iter().enumerate().map(|(i, e)| rec(i as u64, e)).collect();
        let end_time = records.len() as u64;
        Trace { scenario, records, outcome: RunOutcome { stop: StopReason::AllCommitted, events: 0, end_time } }
    }

    fn assert_witness_is_in_trace(result: &CheckResult, trace: &Trace) {
        assert!(!result.witness.is_empty());
        for (i, r) in &result.witness {
            assert_eq!(&trace.records[*i], r);
        }
    }

    #[test]
    fn agreement_flags_conflicting_commits() {
        let t = trace_of(ScenarioConfig::new(1), vec![commit(0, 1, "v0"), commit(1, 1, "v0"), commit(2, 2, "v1")]);
        let r = check_agreement(&t);
        assert_eq!(r.status, CheckStatus::Fail);
        assert_eq!(r.witness.iter().map(|(i, _)| *i).collect::<Vec<_>>(), vec![0, 2]);
        assert_witness_is_in_trace(&r, &t);

        let mut s = ScenarioConfig::new(1);
        s.adversary.faulty.push(FaultyNode { node: 2, strategy: NodeStrategy::MuteLeader });
        let t = trace_of(s, vec![commit(0, 1, "v0"), commit(2, 1, "junk")]);
        assert_eq!(check_agreement(&t).status, CheckStatus::Pass);
    }

    #[test]
    fn lock_in_checks_later_votes_of_the_quorum() {
        let events = vec![
            voted(3, 2, "X"),
            voted(4, 2, "Y"),
            commit(0, 2, "X"),
            voted(4, 3, "Z"),
            voted(3, 3, "X"),
        ];
        let t = trace_of(ScenarioConfig::new(1), events.clone());
        assert_eq!(check_lock_in(&t).status, CheckStatus::Pass);

        let mut bad = events;
        bad.push(voted(3, 4, "v3"));
        let t = trace_of(ScenarioConfig::new(1), bad);
        let r = check_lock_in(&t);
        assert_eq!(r.status, CheckStatus::Fail);
        assert_eq!(r.witness.len(), 3);
        assert_witness_is_in_trace(&r, &t);

        let t = trace_of(ScenarioConfig::new(1), vec![commit(0, 2, "X"), commit(1, 3, "Y")]);
        assert_eq!(check_lock_in(&t).status, CheckStatus::Fail);
    }

    #[test]
    fn validity_strict_and_weak() {
        let proposal = |v: &str| TraceEvent::Proposed {
            node: 1,
            proposal: Proposal { round: 2, value: v.into(), sender: 1, justification: Lockset::new(1) },
        };
        let t = trace_of(ScenarioConfig::new(1), vec![proposal("v1"), commit(0, 2, "v1")]);
        assert_eq!(check_validity_strict(&t).status, CheckStatus::Pass);
        assert_eq!(check_validity_weak(&t).status, CheckStatus::Pass);

        let t = trace_of(ScenarioConfig::new(1), vec![commit(0, 2, "Z")]);
        assert_eq!(check_validity_strict(&t).status, CheckStatus::Fail);
        assert_eq!(check_validity_weak(&t).status, CheckStatus::Fail);

        let mut s = ScenarioConfig::new(1);
        s.adversary.faulty.push(FaultyNode { node: 1, strategy: NodeStrategy::FabricatedLockset });
        let t = trace_of(s, vec![proposal("Z"), commit(0, 2, "Z")]);
        let strict = check_validity_strict(&t);
        assert_eq!(strict.status, CheckStatus::NotApplicable);
        assert_witness_is_in_trace(&strict, &t);
        assert_eq!(check_validity_weak(&t).status, CheckStatus::Pass);
    }

    #[test]
    fn fast_path_verdict() {
        let t = sim::run(&ScenarioConfig::new(1)).unwrap();
        let v = verify(&t);
        assert!(v.checks.iter().all(|c| c.status == CheckStatus::Pass), "{}", v.render());
        assert_eq!(v.exit_code(), 0);
        assert_eq!(v.metrics.commits.len(), 6);
        assert!(v.metrics.commits.values().all(|c| (c.round, c.time) == (1, 2)));
    }

    #[test]
    fn two_step_fails_when_vote_timeout_is_too_short() {
        let mut s = ScenarioConfig::new(1);
        s.to_vote_base = 1;
        s.delta = 2;
        let t = sim::run(&s).unwrap();
        let r = check_two_step(&t);
        assert_eq!(r.status, CheckStatus::Fail, "{r:?}");
        assert_witness_is_in_trace(&r, &t);
    }

    #[test]
    fn two_step_is_gated_on_faults() {
        let mut s = ScenarioConfig::new(1);
        s.adversary.faulty.push(FaultyNode { node: 0, strategy: NodeStrategy::Crash { from: 0 } });
        let t = sim::run(&s).unwrap();
        assert_eq!(check_two_step(&t).status, CheckStatus::NotApplicable);
        let v = verify(&t);
        assert_eq!(v.status(CheckKind::Liveness), Some(CheckStatus::Pass));
        assert_eq!(v.status(CheckKind::ValidityStrict), Some(CheckStatus::Pass));
    }

    #[test]
    fn liveness_round_bound() {
        let mut s = ScenarioConfig::new(1);
        s.delta = 5;
        let t = trace_of(s.clone(), vec![]);
        assert_eq!(r_ok(&t), Some(1));
        s.gst = 100;
        // Rounds start at 0, 30, 90, 210.
        assert_eq!(r_ok(&trace_of(s.clone(), vec![])), Some(4));
        s.gst = 0;
        s.delta = 12;
        // Needs to_vote >= 24: round 2 has 20, round 3 has 40.
        assert_eq!(r_ok(&trace_of(s, vec![])), Some(3));
    }

    #[test]
    fn short_horizon_is_inconclusive() {
        let mut s = ScenarioConfig::new(1);
        s.horizon_ticks = 10;
        s.adversary.faulty.push(FaultyNode { node: 0, strategy: NodeStrategy::Crash { from: 0 } });
        let t = sim::run(&s).unwrap();
        let v = verify(&t);
        assert_eq!(v.status(CheckKind::Liveness), Some(CheckStatus::Inconclusive));
        assert_eq!(v.exit_code(), 4);
    }

    #[test]
    fn quorum_arithmetic() {
        for f in 1..=4usize {
            let n = 5 * f + 1;
            let q = 4 * f + 1;
            // Worst-case overlap of two quorums, and what disjoint ones need.
            assert!(2 * q - n >= 3 * f + 1);
            // Honest members of two disjoint quorums would number 6f+2.
            assert_eq!(2 * (q - f), 6 * f + 2);
            assert!(2 * (q - f) > n);
            // Overlap minus f faulty still leaves 2f+1 honest common voters.
            assert!(2 * q - n - f >= 2 * f + 1);
        }
    }
}
