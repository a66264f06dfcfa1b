//! Deterministic discrete-event simulation of a full cluster.
//!
//! Time is an integer tick count. Every node starts round 1 at tick 0; from
//! then on the only inputs are message deliveries and timer fires, popped in
//! `(time, sequence)` order. Identical scenarios give identical traces.

mod queue;

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use thiserror::Error;

pub use queue::{EventQueue, SimEvent};

use crate::adversary::{apply_node_strategy, AdversaryError, Envelope, NetworkStrategy, NodeStrategy, StrategyContext};
use crate::protocol::{Config, Message, NodeEvent, NodeId, NodeOutput, NodeState, Ticks, Value, Vote};
use crate::scenario::{ScenarioConfig, ScenarioError};
use crate::trace::{RunOutcome, StopReason, Trace, TraceEvent, TraceRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("delay bound violated: {from}->{to} sent at {sent_at} delayed {delay} > delta = {delta}")]
    DelayBoundViolation { from: NodeId, to: NodeId, sent_at: u64, delay: Ticks, delta: Ticks },
    #[error("zero delay requested for {from}->{to} at {sent_at}")]
    ZeroDelay { from: NodeId, to: NodeId, sent_at: u64 },
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
}

/// Chooses how long each copy of a message is in flight.
pub trait DelayPolicy: Clone {
    fn delay(&mut self, from: NodeId, to: NodeId, sent_at: u64, message: &Message) -> Ticks;
}

/// The scenario's own network model: scripted rules, then seeded pre-GST
/// draws, then post-GST delays.
#[derive(Debug, Clone)]
pub struct ScenarioNetwork {
    net: NetworkStrategy,
    seed: u64,
    gst: u64,
    delta: Ticks,
}

impl ScenarioNetwork {
    pub fn new(scenario: &ScenarioConfig) -> Self {
        ScenarioNetwork {
            net: scenario.adversary.network.clone(),
            seed: scenario.seed,
            gst: scenario.gst,
            delta: scenario.delta,
        }
    }
}

impl DelayPolicy for ScenarioNetwork {
    fn delay(&mut self, from: NodeId, to: NodeId, sent_at: u64, message: &Message) -> Ticks {
        self.net.delay(from, to, sent_at, message.kind(), self.seed, self.gst, self.delta)
    }
}

/// Runs `scenario` to completion with its own network model.
pub fn run(scenario: &ScenarioConfig) -> Result<Trace, SimError> {
    let mut sim = Simulator::new(scenario.clone(), ScenarioNetwork::new(scenario))?;
    sim.run()?;
    Ok(sim.into_trace())
}

#[derive(Debug, Clone)]
pub struct Simulator<P> {
    scenario: Arc<ScenarioConfig>,
    cfg: Config,
    nodes: Vec<NodeState>,
    strategies: Vec<Option<NodeStrategy>>,
    faulty: BTreeSet<NodeId>,
    initial_values: Arc<[Value]>,
    queue: EventQueue,
    /// Every vote some node actually signed; the signature check.
    registry: HashSet<Vote>,
    records: Vec<TraceRecord>,
    now: u64,
    events: u64,
    policy: P,
    stopped: Option<StopReason>,
}

impl<P: DelayPolicy> Simulator<P> {
    /// Builds the cluster and runs every node's round-1 start at tick 0.
    pub fn new(scenario: ScenarioConfig, policy: P) -> Result<Self, SimError> {
        scenario.check()?;
        let cfg = scenario.config().map_err(|e| ScenarioError { line: None, message: e.to_string() })?;
        let n = cfg.n();
        let initial_values: Arc<[Value]> = scenario.initial_value_list().into();
        let nodes = (0..n).map(|i| NodeState::new(i, initial_values[i].clone(), &cfg)).collect();
        let strategies = (0..n).map(|i| scenario.adversary.strategy_of(i).cloned()).collect();
        let faulty = scenario.faulty_set();
        let mut sim = Simulator {
            scenario: Arc::new(scenario),
            cfg,
            nodes,
            strategies,
            faulty,
            initial_values,
            queue: EventQueue::default(),
            registry: HashSet::new(),
            records: Vec::new(),
            now: 0,
            events: 0,
            policy,
            stopped: None,
        };
        for i in 0..n {
            let out = sim.nodes[i].step(NodeEvent::RoundStart(1), &sim.cfg, &sim.registry);
            sim.handle_output(i, out)?;
        }
        if sim.all_honest_committed() {
            sim.stopped = Some(StopReason::AllCommitted);
        }
        Ok(sim)
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn policy_mut(&mut self) -> &mut P {
        &mut self.policy
    }

    pub fn stopped(&self) -> Option<StopReason> {
        self.stopped
    }

    pub fn all_honest_committed(&self) -> bool {
        self.nodes
            .iter()
            .filter(|s| !self.faulty.contains(&s.id()))
            .all(|s| s.committed().is_some())
    }

    /// Runs until all honest nodes commit or a horizon is hit.
    pub fn run(&mut self) -> Result<StopReason, SimError> {
        loop {
            if let Some(stop) = self.run_until(u64::MAX)? {
                return Ok(stop);
            }
        }
    }

    /// Processes every event strictly before `time`. Returns the stop reason
    /// once the run is over.
    pub fn run_until(&mut self, time: u64) -> Result<Option<StopReason>, SimError> {
        while self.stopped.is_none() {
            let Some(next) = self.queue.peek_time() else {
                // Nothing left can happen; only reachable if every timer is gone.
                self.stopped = Some(StopReason::HorizonTicks);
                break;
            };
            if next >= time {
                return Ok(None);
            }
            if next > self.scenario.horizon_ticks {
                self.stopped = Some(StopReason::HorizonTicks);
                break;
            }
            if self.events >= self.scenario.horizon_events {
                self.stopped = Some(StopReason::HorizonEvents);
                break;
            }
            let (t, event) = self.queue.pop().expect("peeked");
            self.now = t;
            self.events += 1;
            self.dispatch(event)?;
            if self.all_honest_committed() {
                self.stopped = Some(StopReason::AllCommitted);
            }
        }
        Ok(self.stopped)
    }

    pub fn into_trace(self) -> Trace {
        let outcome = RunOutcome {
            stop: self.stopped.unwrap_or(StopReason::HorizonTicks),
            events: self.events,
            end_time: self.now,
        };
        Trace {
            scenario: Arc::unwrap_or_clone(self.scenario),
            records: self.records,
            outcome,
        }
    }

    fn record(&mut self, event: TraceEvent) {
        self.records.push(TraceRecord { time: self.now, event });
    }

    fn dispatch(&mut self, event: SimEvent) -> Result<(), SimError> {
        let (node, input) = match event {
            SimEvent::Deliver { from, to, sent_at, message } => {
                self.record(TraceEvent::MessageDelivered { from, to, sent_at, message: message.clone() });
                let input = match message {
                    Message::Proposal(p) => NodeEvent::ProposalReceived(p),
                    Message::Vote(v) => NodeEvent::VoteReceived(v),
                };
                (to, input)
            }
            SimEvent::TimerFire { node, kind, round } => {
                self.record(TraceEvent::TimerFired { node, kind, round });
                let input = match kind {
                    crate::protocol::TimerKind::Vote => NodeEvent::VoteTimeout(round),
                    crate::protocol::TimerKind::Commit => NodeEvent::CommitTimeout(round),
                };
                (node, input)
            }
        };
        let out = self.nodes[node].step(input, &self.cfg, &self.registry);
        self.handle_output(node, out)
    }

    fn handle_output(&mut self, node: NodeId, out: NodeOutput) -> Result<(), SimError> {
        let n = self.cfg.n();
        if let Some(round) = out.entered_round {
            self.record(TraceEvent::RoundEntered { node, round });
        }
        for t in &out.timers {
            let fires_at = self.now + t.duration;
            self.record(TraceEvent::TimerArmed { node, kind: t.kind, round: t.round, fires_at });
            self.queue.push(fires_at, SimEvent::TimerFire { node, kind: t.kind, round: t.round });
        }

        let envelopes = match &self.strategies[node] {
            None => out.outgoing.into_iter().map(|m| Envelope::broadcast(m, n)).collect(),
            Some(strategy) => {
                let ctx = StrategyContext {
                    cfg: &self.cfg,
                    now: self.now,
                    state: &self.nodes[node],
                    entered_round: out.entered_round,
                    faulty: &self.faulty,
                    initial_values: &self.initial_values,
                    genuine: &self.registry,
                };
                let actual = apply_node_strategy(node, out.outgoing, strategy, &ctx)?;
                self.registry.extend(actual.forged);
                actual.envelopes
            }
        };
        for env in envelopes {
            self.send(node, env)?;
        }

        for r in out.rejected {
            self.record(TraceEvent::ProposalRejected { node, round: r.round, sender: r.sender, reason: r.reason });
        }
        if let Some(value) = out.committed_now {
            let round = self.nodes[node].commit_round().expect("commit round is set on commit");
            self.record(TraceEvent::Committed { node, round, value });
        }
        Ok(())
    }

    fn send(&mut self, from: NodeId, env: Envelope) -> Result<(), SimError> {
        match &env.message {
            Message::Proposal(p) => self.record(TraceEvent::Proposed { node: from, proposal: p.clone() }),
            Message::Vote(v) => {
                self.registry.insert(v.clone());
                self.record(TraceEvent::Voted { node: from, vote: v.clone() });
            }
        }
        let sent_at = self.now;
        for to in env.to {
            let delay = self.policy.delay(from, to, sent_at, &env.message);
            if delay == 0 {
                return Err(SimError::ZeroDelay { from, to, sent_at });
            }
            let delta = self.scenario.delta;
            let honest_edge = !self.faulty.contains(&from) && !self.faulty.contains(&to);
            if sent_at >= self.scenario.gst && honest_edge && delay > delta {
                return Err(SimError::DelayBoundViolation { from, to, sent_at, delay, delta });
            }
            let deliver_at = sent_at + delay;
            self.record(TraceEvent::MessageSent { from, to, deliver_at, message: env.message.clone() });
            self.queue.push(deliver_at, SimEvent::Deliver { from, to, sent_at, message: env.message.clone() });
        }
        Ok(())
    }
}
