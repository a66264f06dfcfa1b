use std::collections::BTreeMap;

use super::rules::{leader_of, make_proposal, validate_proposal, GenuinenessOracle, Rejection};
use super::{Config, Lockset, Message, Mutation, NodeId, Proposal, Round, Ticks, Value, Vote};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimerKind {
    Vote,
    Commit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeEvent {
    RoundStart(Round),
    ProposalReceived(Proposal),
    VoteReceived(Vote),
    VoteTimeout(Round),
    CommitTimeout(Round),
}

/// Ask the driver to fire `kind` for `round` after `duration` ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimerRequest {
    pub kind: TimerKind,
    pub round: Round,
    pub duration: Ticks,
}

/// A proposal this node dropped after validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejected {
    pub round: Round,
    pub sender: NodeId,
    pub reason: Rejection,
}

/// Everything a single transition asks the driver to do. Every outgoing
/// message is a broadcast to all nodes, the sender included.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeOutput {
    pub outgoing: Vec<Message>,
    pub timers: Vec<TimerRequest>,
    pub committed_now: Option<Value>,
    pub round_advanced: bool,
    pub entered_round: Option<Round>,
    pub rejected: Vec<Rejected>,
}

impl NodeOutput {
    pub fn is_empty(&self) -> bool {
        *self == NodeOutput::default()
    }
}

/// One replica's complete protocol state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeState {
    id: NodeId,
    initial_value: Value,
    current_round: Round,
    to_vote: Ticks,
    to_commit: Ticks,
    voted_this_round: bool,
    last_vote_value: Option<Value>,
    locksets: BTreeMap<Round, Lockset>,
    pending_proposals: BTreeMap<Round, Vec<Proposal>>,
    committed: Option<Value>,
    commit_round: Option<Round>,
}

/// Proposals a node keeps per future round.
const PENDING_PER_ROUND: usize = 4;

impl NodeState {
    /// A node that has not yet started round 1. Feed it
    /// `NodeEvent::RoundStart(1)` to begin.
    pub fn new(id: NodeId, initial_value: Value, cfg: &Config) -> Self {
        assert!(!initial_value.is_empty(), "initial value must not be empty");
        NodeState {
            id,
            initial_value,
            current_round: 1,
            to_vote: cfg.to_vote_base(),
            to_commit: cfg.to_commit_base(),
            voted_this_round: false,
            last_vote_value: None,
            locksets: BTreeMap::new(),
            pending_proposals: BTreeMap::new(),
            committed: None,
            commit_round: None,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn initial_value(&self) -> &Value {
        &self.initial_value
    }

    pub fn current_round(&self) -> Round {
        self.current_round
    }

    pub fn to_vote(&self) -> Ticks {
        self.to_vote
    }

    pub fn to_commit(&self) -> Ticks {
        self.to_commit
    }

    pub fn voted_this_round(&self) -> bool {
        self.voted_this_round
    }

    pub fn last_vote_value(&self) -> Option<&Value> {
        self.last_vote_value.as_ref()
    }

    pub fn lockset(&self, round: Round) -> Option<&Lockset> {
        self.locksets.get(&round)
    }

    pub fn retained_rounds(&self) -> impl Iterator<Item = Round> + '_ {
        self.locksets.keys().copied()
    }

    pub fn committed(&self) -> Option<&Value> {
        self.committed.as_ref()
    }

    pub fn commit_round(&self) -> Option<Round> {
        self.commit_round
    }

    pub fn step(&mut self, event: NodeEvent, cfg: &Config, genuine: &dyn GenuinenessOracle) -> NodeOutput {
        let mut out = NodeOutput::default();
        match event {
            NodeEvent::RoundStart(round) if round == self.current_round => {
                self.round_start_into(cfg, genuine, &mut out)
            }
            NodeEvent::ProposalReceived(p) => self.proposal_into(p, cfg, genuine, &mut out),
            NodeEvent::VoteReceived(v) => {
                let round = v.round;
                if self.record_vote(v) && round == self.current_round {
                    out.committed_now = self.try_commit(cfg);
                }
            }
            NodeEvent::VoteTimeout(round) if round == self.current_round => {
                self.vote_timeout_into(cfg, &mut out)
            }
            NodeEvent::CommitTimeout(round) if round == self.current_round => {
                self.advance_into(cfg, genuine, &mut out)
            }
            // Stale timers and starts for other rounds.
            _ => {}
        }
        out
    }

    pub fn on_round_start(&mut self, cfg: &Config, genuine: &dyn GenuinenessOracle) -> NodeOutput {
        let mut out = NodeOutput::default();
        self.round_start_into(cfg, genuine, &mut out);
        out
    }

    pub fn on_proposal(&mut self, p: Proposal, cfg: &Config, genuine: &dyn GenuinenessOracle) -> NodeOutput {
        let mut out = NodeOutput::default();
        self.proposal_into(p, cfg, genuine, &mut out);
        out
    }

    pub fn on_vote_timeout(&mut self, cfg: &Config) -> NodeOutput {
        let mut out = NodeOutput::default();
        self.vote_timeout_into(cfg, &mut out);
        out
    }

    pub fn advance_round(&mut self, cfg: &Config, genuine: &dyn GenuinenessOracle) -> NodeOutput {
        let mut out = NodeOutput::default();
        self.advance_into(cfg, genuine, &mut out);
        out
    }

    /// Stores `v` in its round's lockset. First vote per (sender, round)
    /// wins; votes older than the previous round are dropped unless they
    /// belong to the commit round.
    pub fn record_vote(&mut self, v: Vote) -> bool {
        if v.round == 0 || (v.round + 1 < self.current_round && Some(v.round) != self.commit_round) {
            return false;
        }
        self.locksets
            .entry(v.round)
            .or_insert_with(|| Lockset::new(v.round))
            .insert(&v)
    }

    /// Commits if some non-empty value has a commit quorum in the current
    /// round's lockset. Returns the value committed by this call.
    pub fn try_commit(&mut self, cfg: &Config) -> Option<Value> {
        if self.committed.is_some() {
            return None;
        }
        let ls = self.locksets.get(&self.current_round)?;
        if ls.len() < cfg.commit_quorum() {
            return None;
        }
        let value = ls
            .tally()
            .into_iter()
            .find(|(value, count)| !value.is_empty() && *count >= cfg.commit_quorum())
            .map(|(value, _)| value.clone())?;
        self.committed = Some(value.clone());
        self.commit_round = Some(self.current_round);
        Some(value)
    }

    fn round_start_into(&mut self, cfg: &Config, genuine: &dyn GenuinenessOracle, out: &mut NodeOutput) {
        let round = self.current_round;
        self.voted_this_round = false;
        out.entered_round = Some(round);
        if self.id == leader_of(round, cfg.n()) {
            if let Some(p) = make_proposal(self, cfg) {
                out.outgoing.push(Message::Proposal(p));
            }
        }
        out.timers.push(TimerRequest { kind: TimerKind::Vote, round, duration: self.to_vote });
        out.timers.push(TimerRequest { kind: TimerKind::Commit, round, duration: self.to_commit });

        if let Some(pending) = self.pending_proposals.remove(&round) {
            for p in pending {
                self.proposal_into(p, cfg, genuine, out);
            }
        }
        if out.committed_now.is_none() {
            out.committed_now = self.try_commit(cfg);
        }
    }

    fn proposal_into(&mut self, p: Proposal, cfg: &Config, genuine: &dyn GenuinenessOracle, out: &mut NodeOutput) {
        if p.round > self.current_round {
            if p.sender == leader_of(p.round, cfg.n()) {
                let pending = self.pending_proposals.entry(p.round).or_default();
                if pending.len() < PENDING_PER_ROUND && !pending.contains(&p) {
                    pending.push(p);
                }
            }
            return;
        }
        if p.round < self.current_round || self.voted_this_round {
            return;
        }
        if let Err(reason) = validate_proposal(&p, cfg, genuine) {
            out.rejected.push(Rejected { round: p.round, sender: p.sender, reason });
            return;
        }
        self.cast_vote(p.value, cfg, out);
    }

    fn vote_timeout_into(&mut self, cfg: &Config, out: &mut NodeOutput) {
        if self.voted_this_round {
            return;
        }
        let value = if self.committed.is_some() && cfg.mutation() == Mutation::RevoteInitialAfterCommit {
            self.initial_value.clone()
        } else if self.current_round == 1 {
            Value::Empty
        } else {
            self.last_vote_value
                .clone()
                .expect("a node votes in every round it leaves")
        };
        self.cast_vote(value, cfg, out);
    }

    fn cast_vote(&mut self, value: Value, cfg: &Config, out: &mut NodeOutput) {
        let vote = Vote { round: self.current_round, value: value.clone(), sender: self.id };
        self.voted_this_round = true;
        self.last_vote_value = Some(value);
        out.outgoing.push(Message::Vote(vote.clone()));
        self.record_vote(vote);
        if out.committed_now.is_none() {
            out.committed_now = self.try_commit(cfg);
        }
    }

    fn advance_into(&mut self, cfg: &Config, genuine: &dyn GenuinenessOracle, out: &mut NodeOutput) {
        self.current_round += 1;
        if cfg.mutation() != Mutation::NoTimeoutDoubling {
            self.to_vote = self.to_vote.saturating_mul(2);
            self.to_commit = self.to_commit.saturating_mul(2);
        }
        self.voted_this_round = false;
        let keep_from = self.current_round - 1;
        let commit_round = self.commit_round;
        self.locksets
            .retain(|&round, _| round >= keep_from || Some(round) == commit_round);
        let current = self.current_round;
        self.pending_proposals.retain(|&round, _| round >= current);
        out.round_advanced = true;
        self.round_start_into(cfg, genuine, out);
    }
}
