// Traces round-trip through their text form, re-check without
// re-simulation, and re-simulate byte for byte.

use std::error::Error;

use twostep::runner::{campaign_scenario, run_scenario, StrategyKind};
use twostep::protocol::Mutation;
use twostep::sim;
use twostep::trace::Trace;
use twostep::verifier::verify;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let scenario = campaign_scenario(StrategyKind::FabricatedLockset, 1, 7, Mutation::None);
    let report = run_scenario(&scenario)?;
    let text = report.trace.to_text();
    println!("trace: {} records, {} bytes", report.trace.records.len(), text.len());
    for line in text.lines().take(6) {
        println!("  {line}");
    }

    let parsed = Trace::parse(&text)?;
    if parsed != report.trace {
        return Err("trace did not survive its text form".into());
    }
    if verify(&parsed) != report.verdict {
        return Err("stored trace gave a different verdict".into());
    }
    if sim::run(&parsed.scenario)?.to_text() != text {
        return Err("re-simulation diverged".into());
    }
    println!("verdict and re-simulation identical");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
