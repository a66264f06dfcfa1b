// A faulty leader can get a value nobody started with committed. The
// commit is still unanimous, and it was proposed, so only strict validity
// is lost.

use std::error::Error;

use twostep::runner::run_scenario;
use twostep::scenario::ScenarioConfig;
use twostep::verifier::{CheckKind, CheckStatus};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let scenario = ScenarioConfig::parse(include_str!("../scenarios/validity_gap.toml"))?;
    let report = run_scenario(&scenario)?;
    print!("{}", report.verdict.render());

    let v = &report.verdict;
    let strict = v.get(CheckKind::ValidityStrict).ok_or("strict validity not checked")?;
    if strict.status != CheckStatus::NotApplicable || strict.witness.is_empty() {
        return Err("expected a witnessed strict-validity violation".into());
    }
    for kind in [CheckKind::Agreement, CheckKind::LockIn, CheckKind::ValidityWeak] {
        if v.status(kind) != Some(CheckStatus::Pass) {
            return Err(format!("{} should still pass", kind.as_str()).into());
        }
    }
    if v.metrics.commits.values().any(|c| c.value != "fab1".into()) {
        return Err("expected the fabricated value to be committed".into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
