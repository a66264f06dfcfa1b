use std::collections::HashSet;

use thiserror::Error;

use super::{Config, Lockset, Mutation, NodeId, NodeState, Proposal, Round, Value, Vote};

/// Stand-in for signature verification: answers whether `vote` was really
/// emitted by its claimed sender.
pub trait GenuinenessOracle {
    fn is_genuine(&self, vote: &Vote) -> bool;
}

impl GenuinenessOracle for HashSet<Vote> {
    fn is_genuine(&self, vote: &Vote) -> bool {
        self.contains(vote)
    }
}

impl<F: Fn(&Vote) -> bool> GenuinenessOracle for F {
    fn is_genuine(&self, vote: &Vote) -> bool {
        self(vote)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Error)]
pub enum Rejection {
    #[error("sender is not the round leader")]
    WrongLeader,
    #[error("proposal carries the empty value")]
    EmptyValue,
    #[error("justification is not a valid lockset of the previous round")]
    InvalidLockset,
    #[error("justification contains a vote its sender never cast")]
    ForgedVote,
    #[error("value ignores a 2f+1 supported candidate")]
    ConstraintViolated,
}

impl Rejection {
    pub const ALL: [Rejection; 5] = [
        Rejection::WrongLeader,
        Rejection::EmptyValue,
        Rejection::InvalidLockset,
        Rejection::ForgedVote,
        Rejection::ConstraintViolated,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Rejection::WrongLeader => "wrong_leader",
            Rejection::EmptyValue => "empty_value",
            Rejection::InvalidLockset => "invalid_lockset",
            Rejection::ForgedVote => "forged_vote",
            Rejection::ConstraintViolated => "constraint_violated",
        }
    }
}

/// Round-robin leader: node 0 leads round 1.
pub fn leader_of(round: Round, n: usize) -> NodeId {
    debug_assert!(round >= 1 && n >= 1);
    (round.saturating_sub(1) % n as u64) as NodeId
}

pub fn is_valid_lockset(ls: &Lockset, expected_round: Round, cfg: &Config) -> bool {
    ls.round() == expected_round
        && ls.len() >= cfg.q_hi()
        && ls.entries().all(|(sender, _)| sender < cfg.n())
}

/// Non-empty values with at least 2f+1 votes in `ls`, smallest first.
pub fn qualifying_values(ls: &Lockset, cfg: &Config) -> Vec<Value> {
    ls.tally()
        .into_iter()
        .filter(|(value, count)| !value.is_empty() && *count >= cfg.q_lo())
        .map(|(value, _)| value.clone())
        .collect()
}

pub fn choose_proposal_value(ls: &Lockset, own_initial: &Value, cfg: &Config) -> Value {
    if cfg.mutation() == Mutation::NoProposalConstraint {
        return own_initial.clone();
    }
    qualifying_values(ls, cfg)
        .into_iter()
        .next()
        .unwrap_or_else(|| own_initial.clone())
}

/// The proposal an honest leader sends when it enters its round, if any.
pub fn make_proposal(state: &NodeState, cfg: &Config) -> Option<Proposal> {
    let round = state.current_round();
    debug_assert_eq!(state.id(), leader_of(round, cfg.n()));
    if round == 1 {
        return Some(Proposal {
            round,
            value: state.initial_value().clone(),
            sender: state.id(),
            justification: Lockset::new(0),
        });
    }
    let ls = state.lockset(round - 1)?;
    if !is_valid_lockset(ls, round - 1, cfg) {
        return None;
    }
    Some(Proposal {
        round,
        value: choose_proposal_value(ls, state.initial_value(), cfg),
        sender: state.id(),
        justification: ls.clone(),
    })
}

pub fn validate_proposal(
    p: &Proposal,
    cfg: &Config,
    genuine: &dyn GenuinenessOracle,
) -> Result<(), Rejection> {
    if p.round == 0 || p.sender != leader_of(p.round, cfg.n()) {
        return Err(Rejection::WrongLeader);
    }
    if p.value.is_empty() {
        return Err(Rejection::EmptyValue);
    }
    let ls = &p.justification;
    if p.round == 1 {
        return if ls.is_empty() { Ok(()) } else { Err(Rejection::InvalidLockset) };
    }
    if !is_valid_lockset(ls, p.round - 1, cfg) {
        return Err(Rejection::InvalidLockset);
    }
    if !ls.votes().all(|v| genuine.is_genuine(&v)) {
        return Err(Rejection::ForgedVote);
    }
    if cfg.mutation() != Mutation::NoProposalConstraint {
        let qualifying = qualifying_values(ls, cfg);
        if !qualifying.is_empty() && !qualifying.contains(&p.value) {
            return Err(Rejection::ConstraintViolated);
        }
    }
    Ok(())
}
