// A crashed round-1 leader costs exactly one round.

use std::error::Error;

use twostep::runner::run_scenario;
use twostep::scenario::ScenarioConfig;
use twostep::trace::TraceEvent;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let scenario = ScenarioConfig::parse(include_str!("../scenarios/crashed_leader.toml"))?;
    let report = run_scenario(&scenario)?;

    let round_one: Vec<_> = report
        .trace
        .records
        .iter()
        .filter_map(|r| match &r.event {
            TraceEvent::Voted { vote, .. } if vote.round == 1 => Some((r.time, vote.value.clone())),
            _ => None,
        })
        .collect();
    println!("round-1 votes: {round_one:?}");
    if round_one.len() != 5 || round_one.iter().any(|(t, v)| *t != 10 || !v.is_empty()) {
        return Err("expected five empty votes at the vote timeout".into());
    }

    for (node, c) in &report.verdict.metrics.commits {
        println!("node {node} committed {} in round {} at tick {}", c.value, c.round, c.time);
    }
    let expected = scenario.to_commit_base + 2;
    if report.verdict.metrics.commits.len() != 5
        || report.verdict.metrics.commits.values().any(|c| (c.round, c.time) != (2, expected))
    {
        return Err(format!("expected all honest nodes to commit in round 2 at tick {expected}").into());
    }
    print!("{}", report.verdict.render());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
