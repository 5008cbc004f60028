//! Running a campaign on a scenario and writing its output directory.
//!
//! Layout of an output directory:
//!
//! - `queue/NNNNNN`: entry inputs, named by discovery index
//! - `crashes/NNNNNN`: one input per deduplicated crash
//! - `stats.jsonl`: one `{exec_id, new_bits, kind}` line per queue entry
//! - `solver.jsonl`: solver steps
//! - `bitmap.bin`: the final coverage map
//! - `summary.json`: totals, including wall-clock time

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use scatterfuzz_core::engine::{CampaignObserver, ExecutionEvent};
use scatterfuzz_core::solver::SolverEvent;
use scatterfuzz_core::{run_campaign, Campaign, CampaignConfig};
use serde::Serialize;

use crate::scenario::{ExpectedString, Scenario};

/// Length of the default zero-filled seed.
pub const DEFAULT_SEED_LEN: usize = 32;

#[derive(Clone, Debug)]
pub struct FuzzOptions {
    pub config: CampaignConfig,
    pub seeds: Vec<Vec<u8>>,
}

impl FuzzOptions {
    pub fn new(config: CampaignConfig) -> Self {
        Self {
            config,
            seeds: vec![vec![0; DEFAULT_SEED_LEN]],
        }
    }
}

#[derive(Serialize)]
struct StatsLine<'a> {
    exec_id: u64,
    new_bits: u32,
    kind: &'a str,
}

/// Tracks the first execution at which each expected comparison passed.
pub struct GroundTruth {
    pub expected: Vec<ExpectedString>,
    pub first_pass: Vec<Option<u64>>,
}

impl GroundTruth {
    pub fn new(expected: &[ExpectedString]) -> Self {
        Self {
            expected: expected.to_vec(),
            first_pass: vec![None; expected.len()],
        }
    }

    fn observe(&mut self, event: &ExecutionEvent<'_>) {
        for rec in &event.trace.comparisons {
            for (e, slot) in self.expected.iter().zip(self.first_pass.iter_mut()) {
                if slot.is_none() && e.satisfied_by(rec) {
                    *slot = Some(event.exec_id);
                }
            }
        }
    }
}

pub struct HarnessObserver {
    pub truth: GroundTruth,
    stats: Option<BufWriter<fs::File>>,
    solver: Option<BufWriter<fs::File>>,
    deadline: Option<Instant>,
    io_error: Option<std::io::Error>,
}

impl HarnessObserver {
    fn keep(&mut self, r: std::io::Result<()>) {
        if let Err(e) = r {
            self.io_error.get_or_insert(e);
        }
    }
}

impl CampaignObserver for HarnessObserver {
    fn on_execution(&mut self, event: &ExecutionEvent<'_>) {
        self.truth.observe(event);
        if event.enqueued.is_some() {
            if let Some(w) = self.stats.as_mut() {
                let line = StatsLine {
                    exec_id: event.exec_id,
                    new_bits: event.novelty.total(),
                    kind: event.origin.name(),
                };
                let r = serde_json::to_writer(&mut *w, &line)
                    .map_err(std::io::Error::from)
                    .and_then(|_| w.write_all(b"\n"));
                self.keep(r);
            }
        }
    }

    fn on_solver_event(&mut self, event: &SolverEvent) {
        if let Some(w) = self.solver.as_mut() {
            let r = serde_json::to_writer(&mut *w, event)
                .map_err(std::io::Error::from)
                .and_then(|_| w.write_all(b"\n"));
            self.keep(r);
        }
    }

    fn should_stop(&mut self, _executions: u64) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }
}

pub struct FuzzOutcome {
    pub campaign: Campaign,
    /// Per expected string, the execution at which it first passed.
    pub first_pass: Vec<(ExpectedString, Option<u64>)>,
    pub elapsed: Duration,
}

#[derive(Serialize)]
struct Summary<'a> {
    scenario: &'a str,
    rng_seed: u64,
    max_executions: u64,
    executions: u64,
    solver_executions: u64,
    unique_blocks: usize,
    queue_entries: usize,
    crashes: usize,
    solver_attempts: usize,
    inconsistent_baselines: u64,
    solved: Vec<SolvedLine>,
    stopped_early: bool,
    wall_clock_secs: f64,
}

#[derive(Serialize)]
struct SolvedLine {
    label: String,
    ideal: String,
    first_pass: Option<u64>,
}

/// Run one campaign. With `out`, the campaign directory is written there
/// (it must not already contain a campaign).
pub fn run_fuzz(scenario: &Scenario, options: &FuzzOptions, out: Option<&Path>) -> Result<FuzzOutcome> {
    let mut obs = HarnessObserver {
        truth: GroundTruth::new(&scenario.expected),
        stats: None,
        solver: None,
        deadline: options
            .config
            .wall_clock_limit
            .map(|s| Instant::now() + Duration::from_secs(s)),
        io_error: None,
    };
    if let Some(dir) = out {
        for sub in ["queue", "crashes"] {
            let p = dir.join(sub);
            if p.exists() && fs::read_dir(&p)?.next().is_some() {
                anyhow::bail!("{} is not empty", p.display());
            }
            fs::create_dir_all(&p).with_context(|| format!("creating {}", p.display()))?;
        }
        obs.stats = Some(BufWriter::new(fs::File::create(dir.join("stats.jsonl"))?));
        obs.solver = Some(BufWriter::new(fs::File::create(dir.join("solver.jsonl"))?));
    }

    let start = Instant::now();
    let campaign = run_campaign(&scenario.program, &options.config, &options.seeds, &mut obs)?;
    let elapsed = start.elapsed();

    if let Some(e) = obs.io_error.take() {
        return Err(e).context("writing campaign logs");
    }
    for w in [obs.stats.as_mut(), obs.solver.as_mut()].into_iter().flatten() {
        w.flush()?;
    }
    let first_pass: Vec<_> = obs
        .truth
        .expected
        .iter()
        .cloned()
        .zip(obs.truth.first_pass.iter().copied())
        .collect();

    if let Some(dir) = out {
        for (i, e) in campaign.queue.iter().enumerate() {
            fs::write(dir.join("queue").join(format!("{i:06}")), &e.input.bytes)?;
        }
        for (i, c) in campaign.stats.crashes.iter().enumerate() {
            fs::write(dir.join("crashes").join(format!("{i:06}")), &c.input)?;
        }
        fs::write(dir.join("bitmap.bin"), campaign.map.to_bytes())?;
        let s = &campaign.stats;
        let summary = Summary {
            scenario: &scenario.name,
            rng_seed: options.config.rng_seed,
            max_executions: options.config.max_executions,
            executions: s.executions,
            solver_executions: s.solver_executions,
            unique_blocks: s.final_unique_blocks(),
            queue_entries: campaign.queue.len(),
            crashes: s.crashes.len(),
            solver_attempts: s.solver_attempts.len(),
            inconsistent_baselines: s.inconsistent_baselines,
            solved: first_pass
                .iter()
                .map(|(e, at)| SolvedLine {
                    label: e.label.clone(),
                    ideal: e.ideal_lossy(),
                    first_pass: *at,
                })
                .collect(),
            stopped_early: s.stopped_early,
            wall_clock_secs: elapsed.as_secs_f64(),
        };
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    }

    Ok(FuzzOutcome {
        campaign,
        first_pass,
        elapsed,
    })
}
