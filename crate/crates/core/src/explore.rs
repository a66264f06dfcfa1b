//! Bounded-exhaustive exploration of the `f = 1` model.
//!
//! Rounds run in lock step: every node enters round `r` at
//! `T(r) = to_commit_base * (2^(r-1) - 1)`. A schedule fixes one faulty
//! behaviour (or none) and, for every round up to the bound, a
//! [`RoundChoice`]:
//!
//! * which nodes get the leader's proposal in one tick: the first `reach`
//!   nodes counting up from the leader. The rest get it one tick after
//!   their vote timer, which is too late to matter.
//! * which round votes arrive in one tick, following a [`VotePattern`].
//!   Late votes land one tick into the next round.
//!
//! Once every honest node has committed, later choices cannot change the
//! trace, so all of their suffixes count as a single schedule.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::adversary::{FaultyNode, InvalidVariant, NodeStrategy};
use crate::protocol::{leader_of, Config, Message, Mutation, NodeId, Round, Ticks};
use crate::scenario::ScenarioConfig;
use crate::sim::{DelayPolicy, SimError, Simulator};
use crate::trace::Trace;
use crate::verifier::{self, CheckKind, CheckStatus, Verdict};

const F: usize = 1;
const N: usize = 5 * F + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VotePattern {
    OnTime,
    AllLate,
    /// Only the next round's leader gets the votes on time.
    OnlyNextLeader,
    /// Everyone but the next round's leader gets the votes on time.
    NextLeaderLate,
    /// Votes arrive on time, except `sender`'s vote to the next leader.
    NextLeaderMisses(NodeId),
}

impl VotePattern {
    pub fn all() -> Vec<VotePattern> {
        let mut v = vec![
            VotePattern::OnTime,
            VotePattern::AllLate,
            VotePattern::OnlyNextLeader,
            VotePattern::NextLeaderLate,
        ];
        v.extend((0..N).map(VotePattern::NextLeaderMisses));
        v
    }

    fn on_time(&self, round: Round, sender: NodeId, to: NodeId) -> bool {
        let next = leader_of(round + 1, N);
        match *self {
            VotePattern::OnTime => true,
            VotePattern::AllLate => false,
            VotePattern::OnlyNextLeader => to == next,
            VotePattern::NextLeaderLate => to != next,
            VotePattern::NextLeaderMisses(s) => !(to == next && sender == s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RoundChoice {
    pub reach: usize,
    pub votes: VotePattern,
}

impl fmt::Display for RoundChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "reach={} votes={:?}", self.reach, self.votes)
    }
}

/// Delays derived from per-round choices.
#[derive(Debug, Clone)]
pub struct ChoicePolicy {
    cfg: Config,
    choices: Vec<RoundChoice>,
}

impl ChoicePolicy {
    fn choice(&self, round: Round) -> RoundChoice {
        // Past the exploration bound the network is simply prompt.
        self.choices
            .get(round as usize - 1)
            .copied()
            .unwrap_or(RoundChoice { reach: N, votes: VotePattern::OnTime })
    }
}

impl DelayPolicy for ChoicePolicy {
    fn delay(&mut self, from: NodeId, to: NodeId, sent_at: u64, message: &Message) -> Ticks {
        let round = message.round().max(1);
        let choice = self.choice(round);
        let late_at = match message {
            Message::Proposal(_) => {
                let pos = (to + N - leader_of(round, N)) % N;
                if pos < choice.reach {
                    return 1;
                }
                self.cfg.round_entry(round) + self.cfg.to_vote(round) + 1
            }
            Message::Vote(v) => {
                if choice.votes.on_time(round, v.sender, to) {
                    return 1;
                }
                self.cfg.round_entry(round + 1) + 1
            }
        };
        let _ = from;
        late_at.saturating_sub(sent_at).max(1)
    }
}

/// Which faulty behaviours to enumerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversaryMenu {
    /// Only the fault-free cluster.
    None,
    /// Fault-free, plus a node crashed from the start.
    CrashOnly,
    /// Every strategy, with equivocation splits 1, 3 and 5 and all three
    /// invalid-proposal variants.
    Full,
}

/// Nodes that may be faulty: the first two leaders and a plain voter.
pub const FAULTY_POSITIONS: [NodeId; 3] = [0, 1, 3];

impl AdversaryMenu {
    pub fn options(&self) -> Vec<Option<FaultyNode>> {
        let mut out = vec![None];
        let strategies: Vec<NodeStrategy> = match self {
            AdversaryMenu::None => return out,
            AdversaryMenu::CrashOnly => vec![NodeStrategy::Crash { from: 0 }],
            AdversaryMenu::Full => {
                let mut s = vec![NodeStrategy::Crash { from: 0 }, NodeStrategy::MuteLeader];
                s.extend([1, 3, 5].map(|k| NodeStrategy::EquivocateVotes { split: Some(k) }));
                s.push(NodeStrategy::FabricatedLockset);
                s.extend(
                    [InvalidVariant::ShortLockset, InvalidVariant::ConstraintViolation, InvalidVariant::EmptyValue]
                        .map(|variant| NodeStrategy::InvalidProposal { variant }),
                );
                s
            }
        };
        for node in FAULTY_POSITIONS {
            for strategy in &strategies {
                out.push(Some(FaultyNode { node, strategy: strategy.clone() }));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ExploreBounds {
    pub rounds: usize,
    pub menu: AdversaryMenu,
    pub reaches: Vec<usize>,
    pub patterns: Vec<VotePattern>,
    /// Maximum number of schedules before refusing to start.
    pub budget: u64,
    pub mutation: Mutation,
}

impl ExploreBounds {
    pub fn new(rounds: usize) -> Self {
        ExploreBounds {
            rounds,
            menu: AdversaryMenu::Full,
            reaches: (0..=N).collect(),
            patterns: VotePattern::all(),
            budget: 10_000_000,
            mutation: Mutation::None,
        }
    }

    pub fn choices(&self) -> Vec<RoundChoice> {
        self.reaches
            .iter()
            .flat_map(|&reach| self.patterns.iter().map(move |&votes| RoundChoice { reach, votes }))
            .collect()
    }

    /// Schedules in the space before collapsing committed suffixes.
    pub fn space_size(&self) -> Option<u64> {
        if self.rounds == 0 {
            return Some(1);
        }
        let per_round = self.choices().len() as u64;
        let menu = self.menu.options().len() as u64;
        (0..self.rounds).try_fold(menu, |acc, _| acc.checked_mul(per_round))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExploreError {
    #[error("space too large: {size} schedules exceed the budget of {budget}")]
    SpaceTooLarge { size: String, budget: u64 },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone)]
pub struct Counterexample {
    pub adversary: Option<FaultyNode>,
    pub choices: Vec<RoundChoice>,
    pub check: CheckKind,
    pub trace: Trace,
    pub verdict: Verdict,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.adversary {
            Some(a) => write!(f, "faulty node {} {:?}", a.node, a.strategy)?,
            None => write!(f, "no faulty node")?,
        }
        for (i, c) in self.choices.iter().enumerate() {
            write!(f, "; round {}: {c}", i + 1)?;
        }
        write!(f, "; {} fails", self.check.as_str())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExploreReport {
    pub rounds: usize,
    pub schedules: u64,
    pub agreement_failures: u64,
    pub lock_in_failures: u64,
    /// First failing schedule in enumeration order.
    pub counterexample: Option<Counterexample>,
}

impl ExploreReport {
    pub fn passed(&self) -> bool {
        self.agreement_failures == 0 && self.lock_in_failures == 0
    }

    fn merge(mut self, other: ExploreReport) -> ExploreReport {
        self.schedules += other.schedules;
        self.agreement_failures += other.agreement_failures;
        self.lock_in_failures += other.lock_in_failures;
        if self.counterexample.is_none() {
            self.counterexample = other.counterexample;
        }
        self
    }
}

/// The scenario every explored schedule runs under.
pub fn base_scenario(rounds: usize, adversary: Option<FaultyNode>, mutation: Mutation) -> ScenarioConfig {
    let mut s = ScenarioConfig::new(F);
    let cfg = s.config().expect("default timeouts are valid");
    let end = cfg.round_entry(rounds as Round + 1);
    s.horizon_ticks = end.saturating_sub(1).max(1);
    // Never stabilise inside the horizon: the choices own every delay.
    s.gst = s.horizon_ticks + 1;
    s.mutation = mutation;
    s.checks = vec![CheckKind::Agreement, CheckKind::LockIn];
    s.adversary.faulty.extend(adversary);
    s
}

pub fn explore_small_model(bounds: &ExploreBounds) -> Result<ExploreReport, ExploreError> {
    match bounds.space_size() {
        Some(size) if size <= bounds.budget => {}
        size => {
            return Err(ExploreError::SpaceTooLarge {
                size: size.map_or_else(|| "more than 2^64".to_string(), |s| s.to_string()),
                budget: bounds.budget,
            })
        }
    }
    if bounds.rounds == 0 {
        // No choice points: the empty schedule, trivially safe.
        return Ok(ExploreReport { schedules: 1, ..ExploreReport::default() });
    }
    let choices = bounds.choices();
    let reports: Result<Vec<ExploreReport>, ExploreError> = bounds
        .menu
        .options()
        .into_par_iter()
        .map(|adversary| explore_adversary(bounds, &choices, adversary))
        .collect();
    let mut total = reports?.into_iter().fold(ExploreReport::default(), ExploreReport::merge);
    total.rounds = bounds.rounds;
    Ok(total)
}

fn explore_adversary(
    bounds: &ExploreBounds,
    choices: &[RoundChoice],
    adversary: Option<FaultyNode>,
) -> Result<ExploreReport, ExploreError> {
    let scenario = base_scenario(bounds.rounds, adversary.clone(), bounds.mutation);
    let cfg = scenario.config().map_err(|e| SimError::Scenario(crate::scenario::ScenarioError { line: None, message: e.to_string() }))?;
    let mut report = ExploreReport::default();
    let mut path = Vec::with_capacity(bounds.rounds);
    for &c in choices {
        path.push(c);
        let sim = Simulator::new(scenario.clone(), ChoicePolicy { cfg, choices: path.clone() })?;
        descend(sim, 1, bounds, choices, &adversary, &mut path, &mut report)?;
        path.pop();
    }
    Ok(report)
}

/// `sim` has its choices fixed up to `round`; runs that round and branches
/// on the next.
fn descend(
    mut sim: Simulator<ChoicePolicy>,
    round: usize,
    bounds: &ExploreBounds,
    choices: &[RoundChoice],
    adversary: &Option<FaultyNode>,
    path: &mut Vec<RoundChoice>,
    report: &mut ExploreReport,
) -> Result<(), ExploreError> {
    let next_entry = sim.config().round_entry(round as Round + 1);
    let stopped = sim.run_until(next_entry)?;
    if round == bounds.rounds || stopped.is_some() {
        return finish(sim, adversary, path, report);
    }
    for &c in choices {
        let mut branch = sim.clone();
        branch.policy_mut().choices.push(c);
        path.push(c);
        descend(branch, round + 1, bounds, choices, adversary, path, report)?;
        path.pop();
    }
    Ok(())
}

fn finish(
    mut sim: Simulator<ChoicePolicy>,
    adversary: &Option<FaultyNode>,
    path: &[RoundChoice],
    report: &mut ExploreReport,
) -> Result<(), ExploreError> {
    sim.run()?;
    let trace = sim.into_trace();
    let verdict = verifier::verify(&trace);
    report.schedules += 1;
    let mut failed = None;
    if verdict.status(CheckKind::Agreement) == Some(CheckStatus::Fail) {
        report.agreement_failures += 1;
        failed = Some(CheckKind::Agreement);
    }
    if verdict.status(CheckKind::LockIn) == Some(CheckStatus::Fail) {
        report.lock_in_failures += 1;
        failed = failed.or(Some(CheckKind::LockIn));
    }
    if let (Some(check), None) = (failed, &report.counterexample) {
        report.counterexample = Some(Counterexample {
            adversary: adversary.clone(),
            choices: path.to_vec(),
            check,
            trace,
            verdict,
        });
    }
    Ok(())
}
