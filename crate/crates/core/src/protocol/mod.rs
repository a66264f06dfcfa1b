//! The replica state machine.
//!
//! Everything in this module is pure: no clocks, no I/O, no randomness.
//! Time only reaches a replica as [`NodeEvent::VoteTimeout`] and
//! [`NodeEvent::CommitTimeout`] events delivered by whatever drives it.

mod message;
mod node;
mod rules;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use message::{Lockset, Message, MessageKind, Proposal, Vote};
pub use node::{NodeEvent, NodeOutput, NodeState, Rejected, TimerKind, TimerRequest};
pub use rules::{
    choose_proposal_value, is_valid_lockset, leader_of, make_proposal, qualifying_values,
    validate_proposal, GenuinenessOracle, Rejection,
};

/// Node identifier in `[0, n)`.
pub type NodeId = usize;

/// Protocol round, starting at 1.
pub type Round = u64;

/// Duration in simulator ticks.
pub type Ticks = u64;

/// A candidate value: an opaque byte string, or the distinguished empty value.
///
/// `Empty` sorts before every payload. The order is only used to break ties
/// between equally eligible proposal values.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Empty,
    Payload(Arc<[u8]>),
}

impl Value {
    pub fn payload(bytes: impl AsRef<[u8]>) -> Self {
        Value::Payload(Arc::from(bytes.as_ref()))
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Value::Empty)
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            Value::Empty => None,
            Value::Payload(bytes) => Some(bytes),
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::payload(s.as_bytes())
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Empty => f.write_str("∅"),
            Value::Payload(bytes) => write!(f, "{:?}", String::from_utf8_lossy(bytes)),
        }
    }
}

/// Deliberately broken protocol variants.
///
/// These exist so the trace oracles can be shown to detect the bugs they
/// are meant to catch. `None` is the correct protocol.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    #[default]
    None,
    /// Commit on 3f+1 matching votes instead of 4f+1.
    WeakCommitQuorum,
    /// Leaders always propose their own initial value and validators skip the
    /// 2f+1 check.
    NoProposalConstraint,
    /// Timeouts keep their base length in every round.
    NoTimeoutDoubling,
    /// A committed node that times out re-votes its initial value.
    RevoteInitialAfterCommit,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("timeouts must be positive")]
    ZeroTimeout,
    #[error("TO_vote < TO_commit required (got {to_vote} >= {to_commit})")]
    VoteNotBeforeCommit { to_vote: Ticks, to_commit: Ticks },
}

/// Static protocol parameters shared by every replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Config {
    f: usize,
    n: usize,
    to_vote_base: Ticks,
    to_commit_base: Ticks,
    mutation: Mutation,
}

impl Config {
    /// Builds a configuration for `n = 5f + 1` nodes.
    pub fn new(f: usize, to_vote_base: Ticks, to_commit_base: Ticks) -> Result<Self, ConfigError> {
        if to_vote_base == 0 || to_commit_base == 0 {
            return Err(ConfigError::ZeroTimeout);
        }
        if to_vote_base >= to_commit_base {
            return Err(ConfigError::VoteNotBeforeCommit {
                to_vote: to_vote_base,
                to_commit: to_commit_base,
            });
        }
        Ok(Config {
            f,
            n: 5 * f + 1,
            to_vote_base,
            to_commit_base,
            mutation: Mutation::None,
        })
    }

    pub fn with_mutation(mut self, mutation: Mutation) -> Self {
        self.mutation = mutation;
        self
    }

    pub fn f(&self) -> usize {
        self.f
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn to_vote_base(&self) -> Ticks {
        self.to_vote_base
    }

    pub fn to_commit_base(&self) -> Ticks {
        self.to_commit_base
    }

    pub fn mutation(&self) -> Mutation {
        self.mutation
    }

    /// 4f+1: lockset validity and commit threshold.
    pub fn q_hi(&self) -> usize {
        4 * self.f + 1
    }

    /// 2f+1: support that forces a leader's proposal value.
    pub fn q_lo(&self) -> usize {
        2 * self.f + 1
    }

    /// Matching votes a node needs to commit. Equal to [`Config::q_hi`]
    /// unless the weak-quorum mutation is active.
    pub fn commit_quorum(&self) -> usize {
        match self.mutation {
            Mutation::WeakCommitQuorum => 3 * self.f + 1,
            _ => self.q_hi(),
        }
    }

    /// TO_vote in `round` under the doubling discipline.
    pub fn to_vote(&self, round: Round) -> Ticks {
        doubled(self.to_vote_base, round)
    }

    /// TO_commit in `round` under the doubling discipline.
    pub fn to_commit(&self, round: Round) -> Ticks {
        doubled(self.to_commit_base, round)
    }

    /// Time a node spends in rounds `1..round`, i.e. when it enters `round`
    /// if it started round 1 at time zero.
    pub fn round_entry(&self, round: Round) -> Ticks {
        (1..round).fold(0u64, |acc, r| acc.saturating_add(self.to_commit(r)))
    }
}

fn doubled(base: Ticks, round: Round) -> Ticks {
    let shift = round.saturating_sub(1).min(63) as u32;
    base.saturating_mul(1u64 << shift)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quorums_follow_f() {
        let cfg = Config::new(2, 10, 30).unwrap();
        assert_eq!(cfg.n(), 11);
        assert_eq!(cfg.q_hi(), 9);
        assert_eq!(cfg.q_lo(), 5);
        assert_eq!(cfg.commit_quorum(), 9);
        assert_eq!(cfg.with_mutation(Mutation::WeakCommitQuorum).commit_quorum(), 7);
    }

    #[test]
    fn timeout_ordering_is_enforced() {
        assert_eq!(
            Config::new(1, 30, 10),
            Err(ConfigError::VoteNotBeforeCommit { to_vote: 30, to_commit: 10 })
        );
        assert_eq!(Config::new(1, 10, 10).unwrap_err().to_string(), "TO_vote < TO_commit required (got 10 >= 10)");
        assert_eq!(Config::new(1, 0, 10), Err(ConfigError::ZeroTimeout));
    }

    #[test]
    fn timeouts_double_per_round() {
        let cfg = Config::new(1, 10, 30).unwrap();
        assert_eq!((cfg.to_vote(1), cfg.to_commit(1)), (10, 30));
        assert_eq!((cfg.to_vote(3), cfg.to_commit(3)), (40, 120));
        assert_eq!(cfg.round_entry(1), 0);
        assert_eq!(cfg.round_entry(2), 30);
        assert_eq!(cfg.round_entry(4), 210);
        for r in 1..40 {
            assert!(cfg.to_vote(r) < cfg.to_commit(r));
        }
        assert_eq!(cfg.to_commit(200), u64::MAX);
    }

    #[test]
    fn empty_sorts_first() {
        assert!(Value::Empty < Value::from(""));
        assert!(Value::from("a") < Value::from("b"));
        assert_eq!(Value::Empty.to_string(), "∅");
    }
}
