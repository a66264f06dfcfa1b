// Scenario files: defaults, validation and canonical rendering.

use std::error::Error;

use twostep::scenario::ScenarioConfig;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let minimal = ScenarioConfig::parse("f = 2\n")?;
    println!("f = 2 expands to:\n{}", minimal.render());

    for bad in [
        "f = 1\nto_vote_base = 30\nto_commit_base = 10\n",
        "f = 1\n\n[[adversary.faulty]]\nnode = 0\nstrategy = \"crash\"\n\n[[adversary.faulty]]\nnode = 2\nstrategy = \"mute_leader\"\n",
        "f = 1\nseed = \"seven\"\n",
    ] {
        match ScenarioConfig::parse(bad) {
            Ok(_) => return Err(format!("accepted {bad:?}").into()),
            Err(e) => println!("rejected: {e}"),
        }
    }

    let full = ScenarioConfig::parse(include_str!("../scenarios/hostile_equivocation.toml"))?;
    if ScenarioConfig::parse(&full.render())? != full {
        return Err("render/parse round trip changed the scenario".into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
