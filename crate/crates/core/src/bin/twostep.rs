use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use twostep::explore::{explore_small_model, AdversaryMenu, ExploreBounds};
use twostep::protocol::Mutation;
use twostep::runner::{self, output_dir, persist, run_scenario};
use twostep::scenario::ScenarioConfig;
use twostep::sim;
use twostep::trace::Trace;
use twostep::verifier::verify;

const CONFIG_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "twostep", about = "Simulate and check the two-step BFT protocol")]
struct Cli {
    /// Print every trace record.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace and verdict.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario over a range of seeds.
    Batch {
        scenario: PathBuf,
        /// Half-open range `A..B`.
        #[arg(long, value_parser = parse_range)]
        seeds: (u64, u64),
    },
    /// Check a stored trace.
    Check { trace: PathBuf },
    /// Print a stored trace with its verdict.
    Replay {
        trace: PathBuf,
        /// Also re-simulate and require a byte-identical trace.
        #[arg(long)]
        resimulate: bool,
    },
    /// Enumerate every schedule of the small model.
    Explore {
        #[arg(long, default_value_t = 1)]
        f: usize,
        #[arg(long)]
        rounds: usize,
        #[arg(long, value_enum, default_value_t = Menu::Full)]
        menu: Menu,
        #[arg(long, value_enum, default_value_t = MutationArg::None)]
        mutation: MutationArg,
        #[arg(long, default_value_t = 10_000_000)]
        budget: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Menu {
    None,
    Crash,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum MutationArg {
    None,
    WeakCommitQuorum,
    NoProposalConstraint,
    NoTimeoutDoubling,
    RevoteInitialAfterCommit,
}

impl From<MutationArg> for Mutation {
    fn from(m: MutationArg) -> Self {
        match m {
            MutationArg::None => Mutation::None,
            MutationArg::WeakCommitQuorum => Mutation::WeakCommitQuorum,
            MutationArg::NoProposalConstraint => Mutation::NoProposalConstraint,
            MutationArg::NoTimeoutDoubling => Mutation::NoTimeoutDoubling,
            MutationArg::RevoteInitialAfterCommit => Mutation::RevoteInitialAfterCommit,
        }
    }
}

fn parse_range(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once("..").ok_or("expected A..B")?;
    let a: u64 = a.trim().parse().map_err(|_| format!("bad range start {a:?}"))?;
    let b: u64 = b.trim().parse().map_err(|_| format!("bad range end {b:?}"))?;
    if a >= b {
        return Err(format!("empty range {a}..{b}"));
    }
    Ok((a, b))
}

fn config_error(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(CONFIG_ERROR)
}

fn load_scenario(path: &Path) -> Result<ScenarioConfig, ExitCode> {
    let text = fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    ScenarioConfig::parse(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

fn load_trace(path: &Path) -> Result<Trace, ExitCode> {
    let text = fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    Trace::parse(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

fn print_records(trace: &Trace) {
    for r in &trace.records {
        eprintln!("{}", r.to_line());
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { CONFIG_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(code) | Err(code) => code,
    }
}

fn execute(cli: Cli) -> Result<ExitCode, ExitCode> {
    match cli.command {
        Command::Run { scenario, seed, out } => {
            let mut s = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let report = run_scenario(&s).map_err(config_error)?;
            if cli.verbose {
                print_records(&report.trace);
            }
            let dir = output_dir(out.as_deref());
            let path = persist(&report, &dir).map_err(|e| config_error(format!("{}: {e}", dir.display())))?;
            print!("{}", report.verdict.render());
            println!("trace {}", path.display());
            Ok(ExitCode::from(report.verdict.exit_code() as u8))
        }
        Command::Batch { scenario, seeds } => {
            let s = load_scenario(&scenario)?;
            let summary = runner::batch(&s, seeds.0..seeds.1);
            if cli.verbose {
                for r in &summary.results {
                    eprintln!("seed {} exit {}{}", r.seed, r.exit_code, r.error.as_deref().map(|e| format!(" {e}")).unwrap_or_default());
                }
            }
            print!("{}", summary.render());
            Ok(ExitCode::from(summary.exit_code() as u8))
        }
        Command::Check { trace } => {
            let t = load_trace(&trace)?;
            let verdict = verify(&t);
            print!("{}", verdict.render());
            Ok(ExitCode::from(verdict.exit_code() as u8))
        }
        Command::Replay { trace, resimulate } => {
            let t = load_trace(&trace)?;
            for r in &t.records {
                println!("{}", r.to_line());
            }
            let verdict = verify(&t);
            print!("{}", verdict.render());
            if resimulate {
                let again = sim::run(&t.scenario).map_err(config_error)?;
                if again.to_text() != t.to_text() {
                    eprintln!("replay diverged from the stored trace");
                    return Ok(ExitCode::from(4));
                }
                println!("replay identical");
            }
            Ok(ExitCode::from(verdict.exit_code() as u8))
        }
        Command::Explore { f, rounds, menu, mutation, budget } => {
            if f != 1 {
                return Err(config_error("exploration is only defined for f = 1"));
            }
            let bounds = ExploreBounds {
                menu: match menu {
                    Menu::None => AdversaryMenu::None,
                    Menu::Crash => AdversaryMenu::CrashOnly,
                    Menu::Full => AdversaryMenu::Full,
                },
                mutation: mutation.into(),
                budget,
                ..ExploreBounds::new(rounds)
            };
            let report = explore_small_model(&bounds).map_err(config_error)?;
            println!(
                "explored rounds={} schedules={} agreement_failures={} lock_in_failures={}",
                report.rounds, report.schedules, report.agreement_failures, report.lock_in_failures
            );
            if let Some(c) = &report.counterexample {
                println!("counterexample {c}");
                if cli.verbose {
                    print_records(&c.trace);
                }
            }
            Ok(ExitCode::from(if report.passed() { 0 } else { 1 }))
        }
    }
}
