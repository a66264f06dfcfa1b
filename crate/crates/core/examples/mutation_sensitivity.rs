// Broken protocol variants are caught by the oracles.

use std::error::Error;

use twostep::explore::{explore_small_model, ExploreBounds};
use twostep::protocol::Mutation;
use twostep::runner::{batch_with, campaign, slow_network_scenario, StrategyKind};
use twostep::verifier::{CheckKind, CheckStatus};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    // A 3f+1 commit quorum: exhaustive depth-2 search finds a split commit.
    let bounds = ExploreBounds { mutation: Mutation::WeakCommitQuorum, ..ExploreBounds::new(2) };
    let report = explore_small_model(&bounds)?;
    println!(
        "weak_commit_quorum: {} schedules, {} agreement and {} lock-in failures",
        report.schedules, report.agreement_failures, report.lock_in_failures
    );
    match &report.counterexample {
        Some(c) => println!("  e.g. {c}"),
        None => return Err("weakened commit quorum went undetected".into()),
    }

    // Leaders that ignore the 2f+1 constraint: caught by random campaigns.
    let summary = campaign(StrategyKind::EquivocateVotes, 1, 0..200, Mutation::NoProposalConstraint);
    let broken = summary.count(CheckKind::LockIn, CheckStatus::Fail);
    println!("no_proposal_constraint: {broken}/200 lock-in failures");
    if broken == 0 {
        return Err("dropped proposal constraint went undetected".into());
    }

    // Fixed timeouts never outgrow a slow network.
    let summary = batch_with(0..50, |seed| slow_network_scenario(seed, Mutation::NoTimeoutDoubling));
    let stalled = summary.count(CheckKind::Liveness, CheckStatus::Fail);
    println!("no_timeout_doubling: {stalled}/50 liveness failures");
    if stalled == 0 {
        return Err("missing timeout doubling went undetected".into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
