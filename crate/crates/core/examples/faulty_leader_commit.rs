// Votes carried over from the previous round let a round commit even
// though its leader never proposes.

use std::error::Error;

use twostep::protocol::Message;
use twostep::runner::run_scenario;
use twostep::scenario::ScenarioConfig;
use twostep::trace::TraceEvent;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let scenario = ScenarioConfig::parse(include_str!("../scenarios/faulty_leader_commit.toml"))?;
    let report = run_scenario(&scenario)?;
    let trace = &report.trace;

    let round_two_proposals = trace
        .records
        .iter()
        .filter(|r| match &r.event {
            TraceEvent::Proposed { proposal, .. } => proposal.round == 2,
            TraceEvent::MessageSent { message: Message::Proposal(p), .. } => p.round == 2,
            _ => false,
        })
        .count();
    println!("round-2 proposals in trace: {round_two_proposals}");

    for r in &trace.records {
        if let TraceEvent::Committed { .. } = r.event {
            println!("{}", r.to_line());
        }
    }
    let commits = &report.verdict.metrics.commits;
    let ok = round_two_proposals == 0
        && commits.len() == scenario.honest_nodes().len()
        && commits.values().all(|c| c.round == 2 && c.time == 51 && c.value == "v0".into());
    if !ok {
        return Err("expected a proposal-free commit of v0 in round 2 at tick 51".into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
