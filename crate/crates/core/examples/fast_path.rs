// Fault-free clusters commit in round 1 after two message hops.

use std::error::Error;

use twostep::runner::run_scenario;
use twostep::scenario::ScenarioConfig;
use twostep::verifier::{CheckKind, CheckStatus};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for f in 1..=3 {
        let scenario = ScenarioConfig::new(f);
        let n = scenario.n();
        let report = run_scenario(&scenario)?;
        let commits = &report.verdict.metrics.commits;
        println!(
            "f={f} n={n}: {} commits, messages={} (n + n^2 = {}), two_step={}",
            commits.len(),
            report.verdict.metrics.messages_sent,
            n + n * n,
            report.verdict.status(CheckKind::TwoStep).map_or("-", |s| s.as_str()),
        );
        if commits.len() != n || commits.values().any(|c| (c.round, c.time) != (1, 2)) {
            return Err(format!("f={f}: expected every node to commit in round 1 at tick 2").into());
        }
        if report.verdict.metrics.messages_sent != n + n * n {
            return Err(format!("f={f}: unexpected message count").into());
        }
        if report.verdict.status(CheckKind::TwoStep) != Some(CheckStatus::Pass) {
            return Err(format!("f={f}: fast path not recognised").into());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
