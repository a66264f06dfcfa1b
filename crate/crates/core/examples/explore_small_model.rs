// Exhaustive enumeration of network schedules and faulty behaviours for
// f = 1. Pass the depth as the first argument (default 2, at most 3).

use std::error::Error;

use twostep::explore::{explore_small_model, ExploreBounds};

pub fn explore(rounds: usize) -> Result<u64, Box<dyn Error>> {
    let bounds = ExploreBounds::new(rounds);
    let report = explore_small_model(&bounds)?;
    println!(
        "rounds={rounds} space={} schedules={} agreement_failures={} lock_in_failures={}",
        bounds.space_size().unwrap_or(u64::MAX),
        report.schedules,
        report.agreement_failures,
        report.lock_in_failures
    );
    if let Some(c) = report.counterexample {
        return Err(format!("counterexample: {c}").into());
    }
    Ok(report.schedules)
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    explore(0)?;
    explore(1)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let rounds = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(2);
    explore(rounds).map(|_| ())
}
