//! Scenario files: every parameter of a simulation run.
//!
//! A scenario is TOML. Only `f` is required:
//!
//! ```toml
//! f = 1
//! to_vote_base = 10
//! to_commit_base = 30
//! gst = 150
//! delta = 5
//! seed = 7
//!
//! [adversary.network]
//! pre_gst = { random = { min = 1, max = 100 } }
//!
//! [[adversary.faulty]]
//! node = 0
//! strategy = "crash"
//! from = 0
//! ```

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{AdversaryError, AdversarySpec, DelaySpec};
use crate::protocol::{Config, ConfigError, Mutation, NodeId, Ticks, Value};
use crate::verifier::CheckKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ScenarioError {
    pub line: Option<usize>,
    pub message: String,
}

impl ScenarioError {
    fn new(message: impl Into<String>) -> Self {
        ScenarioError { line: None, message: message.into() }
    }

    fn at(mut self, line: Option<usize>) -> Self {
        self.line = self.line.or(line);
        self
    }
}

fn default_to_vote() -> Ticks {
    10
}
fn default_to_commit() -> Ticks {
    30
}
fn default_delta() -> Ticks {
    1
}
fn default_horizon_ticks() -> u64 {
    100_000
}
fn default_horizon_events() -> u64 {
    2_000_000
}
fn default_checks() -> Vec<CheckKind> {
    CheckKind::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub f: usize,
    /// One per node; filled with `"v0".."v{n-1}"` when omitted.
    #[serde(default)]
    pub initial_values: Vec<String>,
    #[serde(default = "default_to_vote")]
    pub to_vote_base: Ticks,
    #[serde(default = "default_to_commit")]
    pub to_commit_base: Ticks,
    #[serde(default)]
    pub gst: u64,
    #[serde(default = "default_delta")]
    pub delta: Ticks,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_horizon_ticks")]
    pub horizon_ticks: u64,
    #[serde(default = "default_horizon_events")]
    pub horizon_events: u64,
    #[serde(default, skip_serializing_if = "is_default_mutation")]
    pub mutation: Mutation,
    #[serde(default = "default_checks")]
    pub checks: Vec<CheckKind>,
    #[serde(default)]
    pub adversary: AdversarySpec,
}

fn is_default_mutation(m: &Mutation) -> bool {
    *m == Mutation::None
}

impl ScenarioConfig {
    /// A fault-free scenario with all defaults applied.
    pub fn new(f: usize) -> Self {
        let mut s = ScenarioConfig {
            f,
            initial_values: Vec::new(),
            to_vote_base: default_to_vote(),
            to_commit_base: default_to_commit(),
            gst: 0,
            delta: default_delta(),
            seed: 0,
            horizon_ticks: default_horizon_ticks(),
            horizon_events: default_horizon_events(),
            mutation: Mutation::None,
            checks: default_checks(),
            adversary: AdversarySpec::default(),
        };
        s.fill_defaults();
        s
    }

    pub fn n(&self) -> usize {
        5 * self.f + 1
    }

    /// Protocol configuration, including any mutation.
    pub fn config(&self) -> Result<Config, ConfigError> {
        Ok(Config::new(self.f, self.to_vote_base, self.to_commit_base)?.with_mutation(self.mutation))
    }

    pub fn initial_value(&self, node: NodeId) -> Value {
        Value::from(self.initial_values[node].as_str())
    }

    pub fn initial_value_list(&self) -> Vec<Value> {
        (0..self.n()).map(|i| self.initial_value(i)).collect()
    }

    pub fn faulty_set(&self) -> BTreeSet<NodeId> {
        self.adversary.faulty_set()
    }

    pub fn is_faulty(&self, node: NodeId) -> bool {
        self.adversary.faulty.iter().any(|f| f.node == node)
    }

    pub fn honest_nodes(&self) -> Vec<NodeId> {
        (0..self.n()).filter(|&i| !self.is_faulty(i)).collect()
    }

    fn fill_defaults(&mut self) {
        if self.initial_values.is_empty() {
            self.initial_values = (0..self.n()).map(|i| format!("v{i}")).collect();
        }
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut s: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|span| line_at(text, span.start));
            ScenarioError::new(e.message().trim().to_string()).at(line)
        })?;
        s.fill_defaults();
        s.validate().map_err(|(key, e)| e.at(key.and_then(|k| line_of_key(text, k))))?;
        Ok(s)
    }

    /// Canonical text form; `parse(render(c)) == c`.
    pub fn render(&self) -> String {
        toml::to_string(self).expect("scenario config is always representable as TOML")
    }

    pub fn check(&self) -> Result<(), ScenarioError> {
        self.validate().map_err(|(_, e)| e)
    }

    fn validate(&self) -> Result<(), (Option<&'static str>, ScenarioError)> {
        let err = |key, msg: String| Err((Some(key), ScenarioError::new(msg)));
        let n = self.n();
        if self.to_vote_base == 0 || self.to_commit_base == 0 {
            return err("to_vote_base", "timeouts must be positive".into());
        }
        if self.to_vote_base >= self.to_commit_base {
            return err(
                "to_vote_base",
                format!(
                    "TO_vote < TO_commit required (to_vote_base = {}, to_commit_base = {})",
                    self.to_vote_base, self.to_commit_base
                ),
            );
        }
        if self.initial_values.len() != n {
            return err("initial_values", format!("expected {n} initial values, got {}", self.initial_values.len()));
        }
        if self.delta == 0 {
            return err("delta", "delta must be at least 1 tick".into());
        }
        if self.horizon_ticks == 0 || self.horizon_events == 0 {
            return err("horizon_ticks", "horizon must be positive".into());
        }
        let cfg = self.config().map_err(|e| (None, ScenarioError::new(e.to_string())))?;
        self.adversary.check(&cfg).map_err(|e| {
            let msg = match e {
                AdversaryError::FaultBoundExceeded { faulty, f } => {
                    format!("fault bound exceeded: {faulty} faulty nodes listed, f = {f}")
                }
                other => other.to_string(),
            };
            (Some("[[adversary.faulty]]"), ScenarioError::new(msg))
        })?;
        for fnode in &self.adversary.faulty {
            if let crate::adversary::NodeStrategy::EquivocateVotes { split: Some(k) } = fnode.strategy {
                if k > n {
                    return err("split", format!("equivocation split {k} exceeds n = {n}"));
                }
            }
        }
        let net = &self.adversary.network;
        check_delay(&net.pre_gst).map_err(|m| (Some("pre_gst"), ScenarioError::new(m)))?;
        if let Some(post) = &net.post_gst {
            check_delay(post).map_err(|m| (Some("post_gst"), ScenarioError::new(m)))?;
            if post.max() > self.delta {
                return err("post_gst", format!("post-GST delays exceed delta = {}", self.delta));
            }
        }
        if net.rules.iter().any(|r| r.delay == 0) {
            return err("delay", "scripted delays must be at least 1 tick".into());
        }
        Ok(())
    }
}

fn check_delay(spec: &DelaySpec) -> Result<(), String> {
    if spec.min() == 0 {
        return Err("delays must be at least 1 tick".into());
    }
    if spec.min() > spec.max() {
        return Err("random delay range is empty".into());
    }
    Ok(())
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn line_of_key(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.starts_with(key) && (key.starts_with('[') || l[key.len()..].trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}
