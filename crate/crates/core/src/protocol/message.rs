use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{NodeId, Round, Value};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vote {
    pub round: Round,
    pub value: Value,
    pub sender: NodeId,
}

/// Votes of a single round, at most one per sender.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Lockset {
    round: Round,
    votes: BTreeMap<NodeId, Value>,
}

impl Lockset {
    pub fn new(round: Round) -> Self {
        Lockset {
            round,
            votes: BTreeMap::new(),
        }
    }

    /// Builds a lockset from `(sender, value)` pairs. Later duplicates of a
    /// sender are dropped.
    pub fn from_votes(round: Round, votes: impl IntoIterator<Item = (NodeId, Value)>) -> Self {
        let mut ls = Lockset::new(round);
        for (sender, value) in votes {
            ls.votes.entry(sender).or_insert(value);
        }
        ls
    }

    pub fn round(&self) -> Round {
        self.round
    }

    pub fn len(&self) -> usize {
        self.votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }

    /// Inserts `vote` unless its sender already has one here or its round
    /// differs. Returns whether the vote was added.
    pub fn insert(&mut self, vote: &Vote) -> bool {
        if vote.round != self.round || self.votes.contains_key(&vote.sender) {
            return false;
        }
        self.votes.insert(vote.sender, vote.value.clone());
        true
    }

    pub fn get(&self, sender: NodeId) -> Option<&Value> {
        self.votes.get(&sender)
    }

    pub fn votes(&self) -> impl Iterator<Item = Vote> + '_ {
        self.votes.iter().map(|(&sender, value)| Vote {
            round: self.round,
            value: value.clone(),
            sender,
        })
    }

    pub fn entries(&self) -> impl Iterator<Item = (NodeId, &Value)> {
        self.votes.iter().map(|(&s, v)| (s, v))
    }

    pub fn support(&self, value: &Value) -> usize {
        self.votes.values().filter(|v| *v == value).count()
    }

    /// Vote count per value, in value order.
    pub fn tally(&self) -> BTreeMap<&Value, usize> {
        let mut counts = BTreeMap::new();
        for value in self.votes.values() {
            *counts.entry(value).or_insert(0) += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Proposal {
    pub round: Round,
    pub value: Value,
    pub sender: NodeId,
    /// Lockset of `round - 1`; empty with round 0 for round-1 proposals.
    pub justification: Lockset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Proposal,
    Vote,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Message {
    Proposal(Proposal),
    Vote(Vote),
}

impl Message {
    pub fn round(&self) -> Round {
        match self {
            Message::Proposal(p) => p.round,
            Message::Vote(v) => v.round,
        }
    }

    pub fn sender(&self) -> NodeId {
        match self {
            Message::Proposal(p) => p.sender,
            Message::Vote(v) => v.sender,
        }
    }

    pub fn value(&self) -> &Value {
        match self {
            Message::Proposal(p) => &p.value,
            Message::Vote(v) => &v.value,
        }
    }

    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Proposal(_) => MessageKind::Proposal,
            Message::Vote(_) => MessageKind::Vote,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_vote_per_sender_wins() {
        let mut ls = Lockset::new(2);
        assert!(ls.insert(&Vote { round: 2, value: "X".into(), sender: 3 }));
        assert!(!ls.insert(&Vote { round: 2, value: "Y".into(), sender: 3 }));
        assert!(!ls.insert(&Vote { round: 1, value: "Y".into(), sender: 4 }));
        assert_eq!(ls.len(), 1);
        assert_eq!(ls.get(3), Some(&Value::from("X")));
    }

    #[test]
    fn tally_counts_each_value() {
        let ls = Lockset::from_votes(
            1,
            [(0, "X".into()), (1, "X".into()), (2, Value::Empty), (2, "Y".into())],
        );
        assert_eq!(ls.len(), 3);
        assert_eq!(ls.support(&"X".into()), 2);
        assert_eq!(ls.support(&"Y".into()), 0);
        let tally = ls.tally();
        assert_eq!(tally[&Value::Empty], 1);
    }
}
