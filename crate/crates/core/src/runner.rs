//! Running scenarios, seeded batches and adversarial campaigns.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adversary::{DelaySpec, FaultyNode, InvalidVariant, NodeStrategy};
use crate::protocol::Mutation;
use crate::scenario::ScenarioConfig;
use crate::sim::{self, SimError};
use crate::trace::Trace;
use crate::verifier::{self, CheckKind, CheckStatus, Verdict};

/// Overrides where traces and verdicts are written.
pub const OUT_DIR_ENV: &str = "TWOSTEP_OUT_DIR";

pub fn output_dir(flag: Option<&Path>) -> PathBuf {
    match (flag, std::env::var_os(OUT_DIR_ENV)) {
        (Some(dir), _) => dir.to_path_buf(),
        (None, Some(dir)) => PathBuf::from(dir),
        (None, None) => PathBuf::from("twostep-out"),
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub trace: Trace,
    pub verdict: Verdict,
}

pub fn run_scenario(scenario: &ScenarioConfig) -> Result<RunReport, SimError> {
    let trace = sim::run(scenario)?;
    let verdict = verifier::verify(&trace);
    Ok(RunReport { trace, verdict })
}

/// Writes `trace-<seed>.txt` and `verdict-<seed>.txt` into `dir`.
pub fn persist(report: &RunReport, dir: &Path) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let seed = report.trace.scenario.seed;
    let trace_path = dir.join(format!("trace-{seed}.txt"));
    fs::write(&trace_path, report.trace.to_text())?;
    fs::write(dir.join(format!("verdict-{seed}.txt")), report.verdict.render())?;
    Ok(trace_path)
}

/// Condensed result of one run in a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedResult {
    pub seed: u64,
    pub statuses: Vec<(CheckKind, CheckStatus)>,
    pub exit_code: i32,
    /// Highest commit round over honest nodes.
    pub max_commit_round: Option<u64>,
    pub error: Option<String>,
}

impl SeedResult {
    pub fn status(&self, kind: CheckKind) -> Option<CheckStatus> {
        self.statuses.iter().find(|(k, _)| *k == kind).map(|(_, s)| *s)
    }

    fn from_run(seed: u64, result: Result<RunReport, SimError>) -> Self {
        match result {
            Ok(report) => SeedResult {
                seed,
                statuses: report.verdict.checks.iter().map(|c| (c.kind, c.status)).collect(),
                exit_code: report.verdict.exit_code(),
                max_commit_round: report.verdict.metrics.commits.values().map(|c| c.round).max(),
                error: None,
            },
            Err(e) => SeedResult { seed, statuses: Vec::new(), exit_code: 3, max_commit_round: None, error: Some(e.to_string()) },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BatchSummary {
    /// Sorted by seed.
    pub results: Vec<SeedResult>,
}

impl BatchSummary {
    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }

    pub fn count(&self, kind: CheckKind, status: CheckStatus) -> usize {
        self.results.iter().filter(|r| r.status(kind) == Some(status)).count()
    }

    pub fn errors(&self) -> usize {
        self.results.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn first_failing_seed(&self) -> Option<u64> {
        self.results.iter().find(|r| r.exit_code != 0 && r.exit_code != 4).map(|r| r.seed)
    }

    pub fn inconclusive_seeds(&self) -> Vec<u64> {
        self.results.iter().filter(|r| r.exit_code == 4).map(|r| r.seed).collect()
    }

    /// Worst exit code, treating any failure as worse than inconclusive.
    pub fn exit_code(&self) -> i32 {
        let codes: Vec<i32> = self.results.iter().map(|r| r.exit_code).collect();
        [1, 2, 3, 4].into_iter().find(|c| codes.contains(c)).unwrap_or(0)
    }

    pub fn render(&self) -> String {
        let mut table: BTreeMap<CheckKind, BTreeMap<&'static str, usize>> = BTreeMap::new();
        for r in &self.results {
            for (k, s) in &r.statuses {
                *table.entry(*k).or_default().entry(s.as_str()).or_default() += 1;
            }
        }
        let mut out = format!("runs={} errors={}\n", self.len(), self.errors());
        for (kind, counts) in table {
            let parts: Vec<String> = counts.iter().map(|(s, c)| format!("{s}={c}")).collect();
            out.push_str(&format!("check {} {}\n", kind.as_str(), parts.join(" ")));
        }
        match self.first_failing_seed() {
            Some(seed) => out.push_str(&format!("first_failing_seed={seed}\n")),
            None => out.push_str("first_failing_seed=none\n"),
        }
        out
    }
}

/// Runs `make(seed)` for every seed in parallel.
pub fn batch_with(seeds: Range<u64>, make: impl Fn(u64) -> ScenarioConfig + Sync) -> BatchSummary {
    let results = seeds
        .into_par_iter()
        .map(|seed| SeedResult::from_run(seed, run_scenario(&make(seed))))
        .collect();
    BatchSummary { results }
}

/// `base` with only its seed varied.
pub fn batch(base: &ScenarioConfig, seeds: Range<u64>) -> BatchSummary {
    batch_with(seeds, |seed| ScenarioConfig { seed, ..base.clone() })
}

/// Re-runs `seeds` with both horizons doubled.
pub fn rerun_doubled(seeds: &[u64], make: impl Fn(u64) -> ScenarioConfig + Sync) -> BatchSummary {
    let results = seeds
        .par_iter()
        .map(|&seed| {
            let mut s = make(seed);
            s.horizon_ticks = s.horizon_ticks.saturating_mul(2);
            s.horizon_events = s.horizon_events.saturating_mul(2);
            SeedResult::from_run(seed, run_scenario(&s))
        })
        .collect();
    BatchSummary { results }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    Crash,
    MuteLeader,
    EquivocateVotes,
    InvalidProposal,
    FabricatedLockset,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Crash,
        StrategyKind::MuteLeader,
        StrategyKind::EquivocateVotes,
        StrategyKind::InvalidProposal,
        StrategyKind::FabricatedLockset,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Crash => "crash",
            StrategyKind::MuteLeader => "mute_leader",
            StrategyKind::EquivocateVotes => "equivocate_votes",
            StrategyKind::InvalidProposal => "invalid_proposal",
            StrategyKind::FabricatedLockset => "fabricated_lockset",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        StrategyKind::ALL.into_iter().find(|k| k.as_str() == name)
    }
}

const PRE_GST_CEILINGS: [u64; 5] = [8, 15, 30, 60, 120];

/// One campaign run: `f` faulty nodes at seed-chosen positions, all using
/// `kind`, with seeded random delays before GST at tick 150. The delay
/// ceiling is drawn per seed from 8 to 120 ticks.
pub fn campaign_scenario(kind: StrategyKind, f: usize, seed: u64, mutation: Mutation) -> ScenarioConfig {
    let mut s = ScenarioConfig::new(f);
    s.seed = seed;
    s.gst = 150;
    s.delta = 5;
    s.horizon_ticks = 50_000;
    s.mutation = mutation;
    s.adversary.network.post_gst = Some(DelaySpec::Random { min: 1, max: 5 });

    let n = s.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0ff_ee00 ^ ((f as u64) << 48));
    // Short ceilings split round-1 commits; long ones stall until GST.
    let max = PRE_GST_CEILINGS[rng.random_range(0..PRE_GST_CEILINGS.len())];
    s.adversary.network.pre_gst = DelaySpec::Random { min: 1, max };
    let mut nodes = sample(&mut rng, n, f).into_vec();
    nodes.sort_unstable();
    for node in nodes {
        let strategy = match kind {
            StrategyKind::Crash => NodeStrategy::Crash { from: rng.random_range(0..=200) },
            StrategyKind::MuteLeader => NodeStrategy::MuteLeader,
            StrategyKind::EquivocateVotes => NodeStrategy::EquivocateVotes { split: Some(rng.random_range(1..n)) },
            StrategyKind::InvalidProposal => {
                let variants = [InvalidVariant::ShortLockset, InvalidVariant::ConstraintViolation, InvalidVariant::EmptyValue];
                NodeStrategy::InvalidProposal { variant: variants[rng.random_range(0..variants.len())] }
            }
            StrategyKind::FabricatedLockset => NodeStrategy::FabricatedLockset,
        };
        s.adversary.faulty.push(FaultyNode { node, strategy });
    }
    s
}

/// A network that is stable from the start but as slow as the first vote
/// timeout allows: every delay is `to_vote_base + 5`. Protocols that do not
/// grow their timeouts never catch up. One seed-chosen node may crash. The
/// fast path cannot hold at this speed, so it is not checked.
pub fn slow_network_scenario(seed: u64, mutation: Mutation) -> ScenarioConfig {
    let mut s = ScenarioConfig::new(1);
    s.seed = seed;
    s.delta = s.to_vote_base + 5;
    s.horizon_ticks = 20_000;
    s.mutation = mutation;
    s.checks.retain(|&c| c != CheckKind::TwoStep);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let victim = rng.random_range(0..=s.n());
    if victim < s.n() {
        s.adversary.faulty.push(FaultyNode { node: victim, strategy: NodeStrategy::Crash { from: rng.random_range(0..=100) } });
    }
    s
}

pub fn campaign(kind: StrategyKind, f: usize, seeds: Range<u64>, mutation: Mutation) -> BatchSummary {
    batch_with(seeds, |seed| campaign_scenario(kind, f, seed, mutation))
}
