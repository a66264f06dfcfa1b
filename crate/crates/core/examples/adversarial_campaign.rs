// Seeded campaigns against every faulty strategy, with hostile delays
// before GST.

use std::error::Error;

use twostep::protocol::Mutation;
use twostep::runner::{campaign, StrategyKind};
use twostep::verifier::{CheckKind, CheckStatus};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let seeds = 0..200;
    for kind in StrategyKind::ALL {
        let summary = campaign(kind, 1, seeds.clone(), Mutation::None);
        let fails = |k| summary.count(k, CheckStatus::Fail);
        println!(
            "{:<18} runs={} agreement_fail={} lock_in_fail={} liveness_fail={} inconclusive={}",
            kind.as_str(),
            summary.len(),
            fails(CheckKind::Agreement),
            fails(CheckKind::LockIn),
            fails(CheckKind::Liveness),
            summary.count(CheckKind::Liveness, CheckStatus::Inconclusive),
        );
        if let Some(seed) = summary.first_failing_seed() {
            return Err(format!("{}: seed {seed} failed", kind.as_str()).into());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
