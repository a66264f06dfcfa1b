//! Byzantine node behaviours and adversarial network scheduling.
//!
//! Faulty nodes run the honest state machine; a [`NodeStrategy`] then
//! rewrites what they send. Fabricated votes may only carry faulty sender
//! ids, which is how unforgeable signatures are modelled.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{
    choose_proposal_value, is_valid_lockset, leader_of, qualifying_values, Config, GenuinenessOracle, Lockset,
    Message, MessageKind, NodeId, NodeState, Proposal, Round, Ticks, Value, Vote,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdversaryError {
    #[error("fault bound exceeded: {faulty} faulty nodes with f = {f}")]
    FaultBoundExceeded { faulty: usize, f: usize },
    #[error("faulty node {node} is not in [0, {n})")]
    UnknownNode { node: NodeId, n: usize },
    #[error("node {0} is listed as faulty more than once")]
    DuplicateNode(NodeId),
    #[error("node {node} tried to emit a message signed by non-faulty node {sender}")]
    UnforgeableViolation { node: NodeId, sender: NodeId },
}

/// Which validation clause an invalid proposal breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidVariant {
    /// Justification with fewer than 4f+1 votes.
    ShortLockset,
    /// Value that ignores a 2f+1 supported candidate.
    ConstraintViolation,
    /// The empty value.
    EmptyValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum NodeStrategy {
    /// Sends nothing at or after `from`.
    Crash {
        #[serde(default)]
        from: u64,
    },
    /// Never proposes; votes normally.
    MuteLeader,
    /// Sends each vote as `X` to the `split` lowest ids and as a different
    /// value `Y` to the rest. `split` defaults to `n / 2`.
    EquivocateVotes {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        split: Option<usize>,
    },
    /// Replaces its own proposals with ones failing a validation clause.
    InvalidProposal { variant: InvalidVariant },
    /// Proposes a value nobody holds, justified by a lockset padded with
    /// votes fabricated under faulty ids.
    FabricatedLockset,
}

impl NodeStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            NodeStrategy::Crash { .. } => "crash",
            NodeStrategy::MuteLeader => "mute_leader",
            NodeStrategy::EquivocateVotes { .. } => "equivocate_votes",
            NodeStrategy::InvalidProposal { .. } => "invalid_proposal",
            NodeStrategy::FabricatedLockset => "fabricated_lockset",
        }
    }

    /// Whether this node can get a value nobody holds accepted as a proposal.
    pub fn proposes_unconstrained(&self) -> bool {
        matches!(self, NodeStrategy::FabricatedLockset | NodeStrategy::InvalidProposal { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaultyNode {
    pub node: NodeId,
    #[serde(flatten)]
    pub strategy: NodeStrategy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelaySpec {
    Fixed(Ticks),
    Random { min: Ticks, max: Ticks },
}

impl DelaySpec {
    pub fn max(&self) -> Ticks {
        match *self {
            DelaySpec::Fixed(d) => d,
            DelaySpec::Random { max, .. } => max,
        }
    }

    pub fn min(&self) -> Ticks {
        match *self {
            DelaySpec::Fixed(d) => d,
            DelaySpec::Random { min, .. } => min,
        }
    }
}

/// A scripted delay. Matches messages on an edge (either end may be a
/// wildcard) sent in `[sent_from, sent_until)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DelayRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<MessageKind>,
    #[serde(default)]
    pub sent_from: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sent_until: Option<u64>,
    pub delay: Ticks,
}

impl DelayRule {
    pub fn matches(&self, from: NodeId, to: NodeId, sent_at: u64, kind: MessageKind) -> bool {
        self.from.is_none_or(|f| f == from)
            && self.to.is_none_or(|t| t == to)
            && self.kind.is_none_or(|k| k == kind)
            && sent_at >= self.sent_from
            && self.sent_until.is_none_or(|u| sent_at < u)
    }
}

fn default_pre_gst() -> DelaySpec {
    DelaySpec::Fixed(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkStrategy {
    #[serde(default = "default_pre_gst")]
    pub pre_gst: DelaySpec,
    /// Delays after GST; `None` means every message takes exactly `delta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_gst: Option<DelaySpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<DelayRule>,
}

impl Default for NetworkStrategy {
    fn default() -> Self {
        NetworkStrategy {
            pre_gst: default_pre_gst(),
            post_gst: None,
            rules: Vec::new(),
        }
    }
}

impl NetworkStrategy {
    /// Delay requested for one message on one edge. Scripted rules win over
    /// the pre- and post-GST policies.
    #[allow(clippy::too_many_arguments)]
    pub fn delay(
        &self,
        from: NodeId,
        to: NodeId,
        sent_at: u64,
        kind: MessageKind,
        seed: u64,
        gst: u64,
        delta: Ticks,
    ) -> Ticks {
        if let Some(rule) = self.rules.iter().find(|r| r.matches(from, to, sent_at, kind)) {
            return rule.delay;
        }
        if sent_at < gst {
            pre_gst_delays(&self.pre_gst, (from, to), sent_at, seed)
        } else {
            let spec = self.post_gst.unwrap_or(DelaySpec::Fixed(delta));
            draw(&spec, (from, to), sent_at, seed, 0x706f_7374)
        }
    }
}

/// Pre-GST delay on `edge` for a message sent at `send_time`.
/// Deterministic in `(seed, edge, send_time)`.
pub fn pre_gst_delays(spec: &DelaySpec, edge: (NodeId, NodeId), send_time: u64, seed: u64) -> Ticks {
    draw(spec, edge, send_time, seed, 0x7072_6567)
}

fn draw(spec: &DelaySpec, (from, to): (NodeId, NodeId), send_time: u64, seed: u64, salt: u64) -> Ticks {
    match *spec {
        DelaySpec::Fixed(d) => d,
        DelaySpec::Random { min, max } => {
            let mut key = seed ^ salt.rotate_left(32);
            for part in [from as u64, to as u64, send_time] {
                key = key.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(29) ^ part;
            }
            ChaCha8Rng::seed_from_u64(key).random_range(min..=max)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub faulty: Vec<FaultyNode>,
    #[serde(default)]
    pub network: NetworkStrategy,
}

impl AdversarySpec {
    pub fn faulty_set(&self) -> BTreeSet<NodeId> {
        self.faulty.iter().map(|f| f.node).collect()
    }

    pub fn strategy_of(&self, node: NodeId) -> Option<&NodeStrategy> {
        self.faulty.iter().find(|f| f.node == node).map(|f| &f.strategy)
    }

    pub fn check(&self, cfg: &Config) -> Result<(), AdversaryError> {
        if self.faulty.len() > cfg.f() {
            return Err(AdversaryError::FaultBoundExceeded { faulty: self.faulty.len(), f: cfg.f() });
        }
        let mut seen = BTreeSet::new();
        for f in &self.faulty {
            if f.node >= cfg.n() {
                return Err(AdversaryError::UnknownNode { node: f.node, n: cfg.n() });
            }
            if !seen.insert(f.node) {
                return Err(AdversaryError::DuplicateNode(f.node));
            }
        }
        Ok(())
    }
}

/// A message and who it goes to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub message: Message,
    pub to: Vec<NodeId>,
}

impl Envelope {
    pub fn broadcast(message: Message, n: usize) -> Self {
        Envelope { message, to: (0..n).collect() }
    }
}

/// What a faulty node actually sends, plus any votes it fabricated under
/// faulty ids along the way.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StrategyOutput {
    pub envelopes: Vec<Envelope>,
    pub forged: Vec<Vote>,
}

pub struct StrategyContext<'a> {
    pub cfg: &'a Config,
    pub now: u64,
    pub state: &'a NodeState,
    pub entered_round: Option<Round>,
    pub faulty: &'a BTreeSet<NodeId>,
    pub initial_values: &'a [Value],
    pub genuine: &'a dyn GenuinenessOracle,
}

/// Creates a vote under `sender`'s name. Only faulty ids can be used.
pub fn forge_vote(
    node: NodeId,
    sender: NodeId,
    round: Round,
    value: Value,
    faulty: &BTreeSet<NodeId>,
) -> Result<Vote, AdversaryError> {
    if !faulty.contains(&sender) {
        return Err(AdversaryError::UnforgeableViolation { node, sender });
    }
    Ok(Vote { round, value, sender })
}

pub fn apply_node_strategy(
    node: NodeId,
    intended: Vec<Message>,
    strategy: &NodeStrategy,
    ctx: &StrategyContext<'_>,
) -> Result<StrategyOutput, AdversaryError> {
    let n = ctx.cfg.n();
    let mut out = StrategyOutput::default();
    let leading = ctx
        .entered_round
        .filter(|&r| leader_of(r, n) == node);

    match strategy {
        NodeStrategy::Crash { from } => {
            if ctx.now < *from {
                out.envelopes = intended.into_iter().map(|m| Envelope::broadcast(m, n)).collect();
            }
        }
        NodeStrategy::MuteLeader => {
            out.envelopes = intended
                .into_iter()
                .filter(|m| m.kind() == MessageKind::Vote)
                .map(|m| Envelope::broadcast(m, n))
                .collect();
        }
        NodeStrategy::EquivocateVotes { split } => {
            let split = split.unwrap_or(n / 2).min(n);
            for m in intended {
                match m {
                    Message::Vote(v) => {
                        let other = Vote { value: alternate_value(node, &v.value, ctx), ..v.clone() };
                        out.envelopes.push(Envelope { message: Message::Vote(v), to: (0..split).collect() });
                        out.envelopes.push(Envelope { message: Message::Vote(other), to: (split..n).collect() });
                    }
                    m => out.envelopes.push(Envelope::broadcast(m, n)),
                }
            }
        }
        NodeStrategy::InvalidProposal { variant } => {
            for m in intended {
                if m.kind() == MessageKind::Vote || leading.is_none() {
                    out.envelopes.push(Envelope::broadcast(m, n));
                }
            }
            if let Some(round) = leading {
                let p = invalid_proposal(node, round, *variant, ctx);
                out.envelopes.push(Envelope::broadcast(Message::Proposal(p), n));
            }
        }
        NodeStrategy::FabricatedLockset => {
            for m in intended {
                if m.kind() == MessageKind::Vote || leading.is_none() {
                    out.envelopes.push(Envelope::broadcast(m, n));
                }
            }
            if let Some(round) = leading {
                let (p, forged) = fabricated_proposal(node, round, ctx)?;
                out.forged = forged;
                out.envelopes.push(Envelope::broadcast(Message::Proposal(p), n));
            }
        }
    }
    check_unforgeable(node, &out, ctx)?;
    Ok(out)
}

fn check_unforgeable(node: NodeId, out: &StrategyOutput, ctx: &StrategyContext<'_>) -> Result<(), AdversaryError> {
    for env in &out.envelopes {
        if env.message.sender() != node {
            return Err(AdversaryError::UnforgeableViolation { node, sender: env.message.sender() });
        }
        if let Message::Proposal(p) = &env.message {
            for v in p.justification.votes() {
                if !ctx.faulty.contains(&v.sender) && !ctx.genuine.is_genuine(&v) {
                    return Err(AdversaryError::UnforgeableViolation { node, sender: v.sender });
                }
            }
        }
    }
    Ok(())
}

fn fabricated_value(node: NodeId) -> Value {
    Value::from(format!("fab{node}").as_str())
}

/// A non-empty value different from `x`, taken from other nodes' initial
/// values.
fn alternate_value(node: NodeId, x: &Value, ctx: &StrategyContext<'_>) -> Value {
    let n = ctx.initial_values.len();
    (0..n)
        .map(|i| &ctx.initial_values[(node + i) % n])
        .find(|v| *v != x)
        .cloned()
        .unwrap_or_else(|| fabricated_value(node))
}

fn invalid_proposal(node: NodeId, round: Round, variant: InvalidVariant, ctx: &StrategyContext<'_>) -> Proposal {
    let cfg = ctx.cfg;
    let own = ctx.state.initial_value().clone();
    let prev = if round > 1 {
        ctx.state.lockset(round - 1).cloned().unwrap_or_else(|| Lockset::new(round - 1))
    } else {
        Lockset::new(0)
    };
    let empty = Proposal { round, value: Value::Empty, sender: node, justification: prev.clone() };
    if round == 1 {
        // Round 1 has no lockset and no constraint to break.
        return empty;
    }
    let short = || {
        let truncated = Lockset::from_votes(
            round - 1,
            prev.entries().take(cfg.q_hi() - 1).map(|(s, v)| (s, v.clone())),
        );
        let value = choose_proposal_value(&truncated, &own, cfg);
        Proposal { round, value, sender: node, justification: truncated }
    };
    match variant {
        InvalidVariant::EmptyValue => empty,
        InvalidVariant::ShortLockset => short(),
        InvalidVariant::ConstraintViolation => {
            if !is_valid_lockset(&prev, round - 1, cfg) {
                return short();
            }
            let qualifying = qualifying_values(&prev, cfg);
            if qualifying.is_empty() {
                return empty;
            }
            let value = [own, fabricated_value(node)]
                .into_iter()
                .find(|v| !qualifying.contains(v))
                .expect("a fabricated value has no support");
            Proposal { round, value, sender: node, justification: prev }
        }
    }
}

fn fabricated_proposal(
    node: NodeId,
    round: Round,
    ctx: &StrategyContext<'_>,
) -> Result<(Proposal, Vec<Vote>), AdversaryError> {
    let cfg = ctx.cfg;
    let z = fabricated_value(node);
    if round == 1 {
        return Ok((Proposal { round, value: z, sender: node, justification: Lockset::new(0) }, Vec::new()));
    }
    let prev_round = round - 1;
    let mut forged = Vec::new();
    for &f in ctx.faulty {
        forged.push(forge_vote(node, f, prev_round, z.clone(), ctx.faulty)?);
    }
    let mut chosen: Vec<(NodeId, Value)> = forged.iter().map(|v| (v.sender, v.value.clone())).collect();

    // Genuine honest votes, empty ones first, keeping every value below 2f+1.
    let mut genuine: Vec<(NodeId, Value)> = ctx
        .state
        .lockset(prev_round)
        .map(|ls| {
            ls.entries()
                .filter(|(s, _)| !ctx.faulty.contains(s))
                .map(|(s, v)| (s, v.clone()))
                .collect()
        })
        .unwrap_or_default();
    genuine.sort_by_key(|(s, v)| (!v.is_empty(), *s));
    let mut support: BTreeMap<Value, usize> = BTreeMap::new();
    let mut leftovers = Vec::new();
    for (s, v) in genuine {
        let count = support.entry(v.clone()).or_insert(0);
        if chosen.len() < cfg.q_hi() && (v.is_empty() || *count + 1 < cfg.q_lo()) {
            *count += 1;
            chosen.push((s, v));
        } else {
            leftovers.push((s, v));
        }
    }
    if chosen.len() < cfg.q_hi() {
        chosen.extend(leftovers);
    }
    let justification = Lockset::from_votes(prev_round, chosen);
    Ok((Proposal { round, value: z, sender: node, justification }, forged))
}
