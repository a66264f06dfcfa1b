//! Simulation traces and their line-oriented text form.
//!
//! ```text
//! twostep-trace v1
//! scenario f = 1
//! scenario ...
//! 0 round_entered node=0 round=1
//! 0 timer_armed node=0 kind=vote round=1 fires=10
//! 0 proposed node=0 round=1 value=v0 sender=0 just_round=0 just=
//! 0 sent from=0 to=3 deliver=1 msg=proposal round=1 value=v0 sender=0 just_round=0 just=
//! 1 delivered from=0 to=3 sent=0 msg=proposal round=1 value=v0 sender=0 just_round=0 just=
//! 1 voted node=3 round=1 value=v0
//! 2 committed node=3 round=1 value=v0
//! outcome stop=all_committed events=84 end=2
//! ```
//!
//! `scenario` lines carry the scenario file verbatim. Values are written
//! with `~` for the empty value, `%` for a zero-length payload, and bytes
//! outside `[A-Za-z0-9_.-]` percent-encoded. Justifications are
//! `sender:value` lists separated by commas.

use std::fmt::Write as _;

use thiserror::Error;

use crate::protocol::{
    Lockset, Message, NodeId, Proposal, Rejection, Round, TimerKind, Value, Vote,
};
use crate::scenario::{ScenarioConfig, ScenarioError};

const HEADER: &str = "twostep-trace v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    RoundEntered { node: NodeId, round: Round },
    TimerArmed { node: NodeId, kind: TimerKind, round: Round, fires_at: u64 },
    TimerFired { node: NodeId, kind: TimerKind, round: Round },
    Proposed { node: NodeId, proposal: Proposal },
    Voted { node: NodeId, vote: Vote },
    MessageSent { from: NodeId, to: NodeId, deliver_at: u64, message: Message },
    MessageDelivered { from: NodeId, to: NodeId, sent_at: u64, message: Message },
    ProposalRejected { node: NodeId, round: Round, sender: NodeId, reason: Rejection },
    Committed { node: NodeId, round: Round, value: Value },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: u64,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    AllCommitted,
    /// Next event lay beyond the tick horizon.
    HorizonTicks,
    /// Event budget spent.
    HorizonEvents,
}

impl StopReason {
    pub fn is_horizon(&self) -> bool {
        !matches!(self, StopReason::AllCommitted)
    }

    fn as_str(&self) -> &'static str {
        match self {
            StopReason::AllCommitted => "all_committed",
            StopReason::HorizonTicks => "horizon_ticks",
            StopReason::HorizonEvents => "horizon_events",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOutcome {
    pub stop: StopReason,
    pub events: u64,
    pub end_time: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub scenario: ScenarioConfig,
    pub records: Vec<TraceRecord>,
    pub outcome: RunOutcome,
}

#[derive(Debug, Error)]
pub enum TraceParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("embedded scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("trace is missing its {0}")]
    Missing(&'static str),
}

impl Trace {
    pub fn messages_sent(&self) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(r.event, TraceEvent::MessageSent { .. }))
            .count()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(HEADER);
        out.push('\n');
        for line in self.scenario.render().lines() {
            out.push_str("scenario");
            if !line.is_empty() {
                out.push(' ');
                out.push_str(line);
            }
            out.push('\n');
        }
        for r in &self.records {
            write_record(&mut out, r);
            out.push('\n');
        }
        let o = &self.outcome;
        let _ = writeln!(out, "outcome stop={} events={} end={}", o.stop.as_str(), o.events, o.end_time);
        out
    }

    pub fn parse(text: &str) -> Result<Trace, TraceParseError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, HEADER)) => {}
            _ => return Err(TraceParseError::Missing("header")),
        }
        let mut scenario_text = String::new();
        let mut records = Vec::new();
        let mut outcome = None;
        for (i, line) in lines {
            let lineno = i + 1;
            let syntax = |message: String| TraceParseError::Syntax { line: lineno, message };
            if let Some(rest) = line.strip_prefix("scenario") {
                scenario_text.push_str(rest.strip_prefix(' ').unwrap_or(rest));
                scenario_text.push('\n');
                continue;
            }
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("outcome ") {
                let f = Fields::new(rest);
                let stop = match f.get("stop").map_err(syntax)? {
                    "all_committed" => StopReason::AllCommitted,
                    "horizon_ticks" => StopReason::HorizonTicks,
                    "horizon_events" => StopReason::HorizonEvents,
                    other => return Err(syntax(format!("unknown stop reason {other:?}"))),
                };
                outcome = Some(RunOutcome {
                    stop,
                    events: f.num("events").map_err(syntax)?,
                    end_time: f.num("end").map_err(syntax)?,
                });
                continue;
            }
            records.push(parse_record(line).map_err(syntax)?);
        }
        let scenario = ScenarioConfig::parse(&scenario_text)?;
        Ok(Trace {
            scenario,
            records,
            outcome: outcome.ok_or(TraceParseError::Missing("outcome line"))?,
        })
    }
}

impl TraceRecord {
    pub fn to_line(&self) -> String {
        let mut s = String::new();
        write_record(&mut s, self);
        s
    }
}

fn timer_kind_str(kind: TimerKind) -> &'static str {
    match kind {
        TimerKind::Vote => "vote",
        TimerKind::Commit => "commit",
    }
}

fn write_record(out: &mut String, r: &TraceRecord) {
    let _ = write!(out, "{} ", r.time);
    match &r.event {
        TraceEvent::RoundEntered { node, round } => {
            let _ = write!(out, "round_entered node={node} round={round}");
        }
        TraceEvent::TimerArmed { node, kind, round, fires_at } => {
            let _ = write!(out, "timer_armed node={node} kind={} round={round} fires={fires_at}", timer_kind_str(*kind));
        }
        TraceEvent::TimerFired { node, kind, round } => {
            let _ = write!(out, "timer_fired node={node} kind={} round={round}", timer_kind_str(*kind));
        }
        TraceEvent::Proposed { node, proposal } => {
            let _ = write!(out, "proposed node={node} ");
            write_proposal_fields(out, proposal);
        }
        TraceEvent::Voted { node, vote } => {
            let _ = write!(out, "voted node={node} round={} value={}", vote.round, encode_value(&vote.value));
        }
        TraceEvent::MessageSent { from, to, deliver_at, message } => {
            let _ = write!(out, "sent from={from} to={to} deliver={deliver_at} ");
            write_message(out, message);
        }
        TraceEvent::MessageDelivered { from, to, sent_at, message } => {
            let _ = write!(out, "delivered from={from} to={to} sent={sent_at} ");
            write_message(out, message);
        }
        TraceEvent::ProposalRejected { node, round, sender, reason } => {
            let _ = write!(out, "rejected node={node} round={round} sender={sender} reason={}", reason.as_str());
        }
        TraceEvent::Committed { node, round, value } => {
            let _ = write!(out, "committed node={node} round={round} value={}", encode_value(value));
        }
    }
}

fn write_message(out: &mut String, m: &Message) {
    match m {
        Message::Vote(v) => {
            let _ = write!(out, "msg=vote round={} value={} sender={}", v.round, encode_value(&v.value), v.sender);
        }
        Message::Proposal(p) => {
            out.push_str("msg=proposal ");
            write_proposal_fields(out, p);
        }
    }
}

fn write_proposal_fields(out: &mut String, p: &Proposal) {
    let _ = write!(
        out,
        "round={} value={} sender={} just_round={} just=",
        p.round,
        encode_value(&p.value),
        p.sender,
        p.justification.round()
    );
    for (i, (sender, value)) in p.justification.entries().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{sender}:{}", encode_value(value));
    }
}

pub fn encode_value(value: &Value) -> String {
    let Some(bytes) = value.as_bytes() else {
        return "~".to_string();
    };
    if bytes.is_empty() {
        return "%".to_string();
    }
    let mut s = String::with_capacity(bytes.len());
    for &b in bytes {
        if b.is_ascii_alphanumeric() || matches!(b, b'_' | b'.' | b'-') {
            s.push(b as char);
        } else {
            let _ = write!(s, "%{b:02X}");
        }
    }
    s
}

pub fn decode_value(token: &str) -> Result<Value, String> {
    match token {
        "~" => return Ok(Value::Empty),
        "%" => return Ok(Value::payload([])),
        "" => return Err("missing value".into()),
        _ => {}
    }
    let raw = token.as_bytes();
    let mut bytes = Vec::with_capacity(raw.len());
    let mut i = 0;
    while i < raw.len() {
        if raw[i] == b'%' {
            let hex = token
                .get(i + 1..i + 3)
                .ok_or_else(|| format!("truncated escape in {token:?}"))?;
            bytes.push(u8::from_str_radix(hex, 16).map_err(|_| format!("bad escape in {token:?}"))?);
            i += 3;
        } else {
            bytes.push(raw[i]);
            i += 1;
        }
    }
    Ok(Value::payload(bytes))
}

struct Fields<'a> {
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> Fields<'a> {
    fn new(text: &'a str) -> Self {
        let pairs = text
            .split(' ')
            .filter(|t| !t.is_empty())
            .map(|t| t.split_once('=').unwrap_or((t, "")))
            .collect();
        Fields { pairs }
    }

    fn get(&self, key: &str) -> Result<&'a str, String> {
        self.pairs
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| format!("missing field {key:?}"))
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T, String> {
        let raw = self.get(key)?;
        raw.parse().map_err(|_| format!("field {key:?} is not a number: {raw:?}"))
    }

    fn value(&self, key: &str) -> Result<Value, String> {
        decode_value(self.get(key)?)
    }

    fn timer_kind(&self) -> Result<TimerKind, String> {
        match self.get("kind")? {
            "vote" => Ok(TimerKind::Vote),
            "commit" => Ok(TimerKind::Commit),
            other => Err(format!("unknown timer kind {other:?}")),
        }
    }

    fn proposal(&self) -> Result<Proposal, String> {
        let mut justification = Lockset::new(self.num("just_round")?);
        let just = self.get("just")?;
        for entry in just.split(',').filter(|e| !e.is_empty()) {
            let (sender, value) = entry.split_once(':').ok_or_else(|| format!("bad lockset entry {entry:?}"))?;
            let sender = sender.parse().map_err(|_| format!("bad lockset sender {sender:?}"))?;
            let vote = Vote { round: justification.round(), value: decode_value(value)?, sender };
            if !justification.insert(&vote) {
                return Err(format!("duplicate lockset sender {sender}"));
            }
        }
        Ok(Proposal {
            round: self.num("round")?,
            value: self.value("value")?,
            sender: self.num("sender")?,
            justification,
        })
    }

    fn message(&self) -> Result<Message, String> {
        match self.get("msg")? {
            "vote" => Ok(Message::Vote(Vote {
                round: self.num("round")?,
                value: self.value("value")?,
                sender: self.num("sender")?,
            })),
            "proposal" => Ok(Message::Proposal(self.proposal()?)),
            other => Err(format!("unknown message kind {other:?}")),
        }
    }
}

fn parse_record(line: &str) -> Result<TraceRecord, String> {
    let mut parts = line.splitn(3, ' ');
    let time = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| "record must start with a time".to_string())?;
    let kind = parts.next().ok_or("missing record kind")?;
    let f = Fields::new(parts.next().unwrap_or(""));
    let event = match kind {
        "round_entered" => TraceEvent::RoundEntered { node: f.num("node")?, round: f.num("round")? },
        "timer_armed" => TraceEvent::TimerArmed {
            node: f.num("node")?,
            kind: f.timer_kind()?,
            round: f.num("round")?,
            fires_at: f.num("fires")?,
        },
        "timer_fired" => TraceEvent::TimerFired { node: f.num("node")?, kind: f.timer_kind()?, round: f.num("round")? },
        "proposed" => TraceEvent::Proposed { node: f.num("node")?, proposal: f.proposal()? },
        "voted" => {
            let node = f.num("node")?;
            TraceEvent::Voted { node, vote: Vote { round: f.num("round")?, value: f.value("value")?, sender: node } }
        }
        "sent" => TraceEvent::MessageSent {
            from: f.num("from")?,
            to: f.num("to")?,
            deliver_at: f.num("deliver")?,
            message: f.message()?,
        },
        "delivered" => TraceEvent::MessageDelivered {
            from: f.num("from")?,
            to: f.num("to")?,
            sent_at: f.num("sent")?,
            message: f.message()?,
        },
        "rejected" => {
            let reason = f.get("reason")?;
            TraceEvent::ProposalRejected {
                node: f.num("node")?,
                round: f.num("round")?,
                sender: f.num("sender")?,
                reason: *Rejection::ALL
                    .iter()
                    .find(|r| r.as_str() == reason)
                    .ok_or_else(|| format!("unknown rejection {reason:?}"))?,
            }
        }
        "committed" => TraceEvent::Committed { node: f.num("node")?, round: f.num("round")?, value: f.value("value")? },
        other => return Err(format!("unknown record kind {other:?}")),
    };
    Ok(TraceRecord { time, event })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn value_tokens() {
        assert_eq!(encode_value(&Value::Empty), "~");
        assert_eq!(encode_value(&Value::payload([])), "%");
        assert_eq!(encode_value(&Value::from("v0")), "v0");
        assert_eq!(encode_value(&Value::from("a b=c")), "a%20b%3Dc");
        assert_eq!(decode_value("a%20b%3Dc").unwrap(), Value::from("a b=c"));
        assert!(decode_value("%4").is_err());
        assert!(decode_value("").is_err());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_record("x voted node=1 round=1 value=a").is_err());
        assert!(parse_record("3 voted node=1 value=a").is_err());
        assert!(parse_record("3 exploded node=1").is_err());
        assert!(matches!(Trace::parse("nope\n"), Err(TraceParseError::Missing("header"))));
    }

    proptest! {
        #[test]
        fn value_encoding_round_trips(bytes in proptest::collection::vec(any::<u8>(), 0..12)) {
            let v = Value::payload(&bytes);
            let token = encode_value(&v);
            prop_assert!(!token.contains(' ') && !token.contains(',') && !token.contains(':') && !token.contains('='));
            prop_assert_eq!(decode_value(&token).unwrap(), v);
        }

        #[test]
        fn records_round_trip(
            time in 0u64..10_000,
            round in 1u64..20,
            sender in 0usize..6,
            to in 0usize..6,
            votes in proptest::collection::btree_map(0usize..6, proptest::option::of("[a-z~ ]{0,3}"), 0..6),
        ) {
            let value_of = |v: &Option<String>| v.as_deref().map(Value::from).unwrap_or(Value::Empty);
            let justification = Lockset::from_votes(round - 1, votes.iter().map(|(s, v)| (*s, value_of(v))));
            let proposal = Proposal { round, value: Value::from("p q"), sender, justification };
            for event in [
                TraceEvent::MessageSent { from: sender, to, deliver_at: time + 3, message: Message::Proposal(proposal.clone()) },
                TraceEvent::MessageDelivered { from: sender, to, sent_at: time, message: Message::Vote(Vote { round, value: Value::Empty, sender }) },
                TraceEvent::Proposed { node: sender, proposal: proposal.clone() },
                TraceEvent::Committed { node: to, round, value: Value::from("x") },
                TraceEvent::ProposalRejected { node: to, round, sender, reason: Rejection::ForgedVote },
                TraceEvent::TimerArmed { node: to, kind: TimerKind::Commit, round, fires_at: time + 30 },
            ] {
                let record = TraceRecord { time, event };
                prop_assert_eq!(parse_record(&record.to_line()).unwrap(), record);
            }
        }
    }
}
