//! Coverage-guided fuzzing loop with an optional comparison-solver stage.
//!
//! The loop is single-threaded and fully determined by the configuration's
//! RNG seed unless an observer stops it early. Mutation and solver
//! randomness come from separate streams, so disabling the solver leaves
//! every mutation identical.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cmplog::{CmpKey, ComparisonRecord};
use crate::coverage::{edge_bit, CoverageMap, Novelty};
use crate::solver::{
    colorize, default_color_budget, default_exec_budget, solve_with_alignments, Alignment,
    ProgramExecutor, SolveError, SolveObserver, SolveOptions, SolveResult, SolveStatus, SolverEvent,
};
use crate::vm::{execute, ExecutionTrace, ExitReason, FuzzInput, TargetProgram, DEFAULT_BUDGET};

/// Upper bound on mutated input length.
pub const MAX_INPUT_LEN: usize = 4096;
/// Mutations per queue entry visit.
pub const DEFAULT_ENERGY: u32 = 64;

const SOLVER_STREAM: u64 = 0x736f_6c76_6572_0001;
const MAX_BLOCK: usize = 32;

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MutationWeights {
    pub bit_flip: u32,
    pub random_byte: u32,
    pub block_duplicate: u32,
    pub block_remove: u32,
    pub splice: u32,
}

impl Default for MutationWeights {
    fn default() -> Self {
        Self {
            bit_flip: 4,
            random_byte: 4,
            block_duplicate: 2,
            block_remove: 2,
            splice: 1,
        }
    }
}

impl MutationWeights {
    fn total(&self) -> u32 {
        self.bit_flip + self.random_byte + self.block_duplicate + self.block_remove + self.splice
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CampaignConfig {
    pub rng_seed: u64,
    pub max_executions: u64,
    /// Seconds. The core loop has no clock; std callers enforce this through
    /// [`CampaignObserver::should_stop`].
    pub wall_clock_limit: Option<u64>,
    pub solver_enabled: bool,
    pub colorization_enabled: bool,
    pub length_feedback_enabled: bool,
    pub weights: MutationWeights,
    pub energy: u32,
    /// Instruction budget of a single execution.
    pub instruction_budget: u64,
    pub solve_options: SolveOptions,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            rng_seed: 1,
            max_executions: 100_000,
            wall_clock_limit: None,
            solver_enabled: true,
            colorization_enabled: true,
            length_feedback_enabled: true,
            weights: MutationWeights::default(),
            energy: DEFAULT_ENERGY,
            instruction_budget: DEFAULT_BUDGET,
            solve_options: SolveOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConfigError {
    ZeroExecutionBudget,
    ZeroWallClock,
    ZeroInstructionBudget,
    ZeroEnergy,
    ZeroWeights,
    NoSeeds,
}

impl core::error::Error for ConfigError {}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConfigError::ZeroExecutionBudget => "execution budget is zero",
            ConfigError::ZeroWallClock => "wall-clock limit is zero",
            ConfigError::ZeroInstructionBudget => "per-execution instruction budget is zero",
            ConfigError::ZeroEnergy => "energy is zero",
            ConfigError::ZeroWeights => "all mutation weights are zero",
            ConfigError::NoSeeds => "no seed inputs",
        };
        f.write_str(s)
    }
}

/// How an executed input was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Origin {
    Seed,
    Mutation,
    Solver,
}

impl Origin {
    pub fn name(&self) -> &'static str {
        match self {
            Origin::Seed => "seed",
            Origin::Mutation => "mutation",
            Origin::Solver => "solver",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueueEntry {
    pub input: FuzzInput,
    pub trace_digest: u64,
    /// Campaign execution count when the entry was found.
    pub discovered_at: u64,
    pub solver_done: BTreeSet<CmpKey>,
    pub favored: bool,
    pub origin: Origin,
    pub novelty: Novelty,
    edge_bits: Vec<usize>,
}

impl AsRef<[u8]> for QueueEntry {
    fn as_ref(&self) -> &[u8] {
        &self.input.bytes
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CrashRecord {
    pub exit_pc: usize,
    pub edge_digest: u64,
    pub exec_id: u64,
    pub input: Vec<u8>,
}

/// Summary of one solver attempt.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolveAttempt {
    pub entry: usize,
    pub key: CmpKey,
    pub status: SolveStatus,
    pub alignment: Alignment,
    /// Colorization and solving executions together.
    pub executions: u64,
    /// Queue index of the enqueued solution.
    pub enqueued: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CampaignStats {
    pub executions: u64,
    /// `(executions, unique blocks)` each time the block count grew.
    pub unique_blocks: Vec<(u64, usize)>,
    /// Solved comparison site and the execution count of its first solve.
    pub solved_comparisons: BTreeMap<usize, u64>,
    pub crashes: Vec<CrashRecord>,
    pub solver_attempts: Vec<SolveAttempt>,
    pub solver_executions: u64,
    pub inconsistent_baselines: u64,
    pub stopped_early: bool,
}

impl CampaignStats {
    pub fn final_unique_blocks(&self) -> usize {
        self.unique_blocks.last().map_or(0, |&(_, n)| n)
    }

    pub fn is_solved(&self, cmp_id: usize) -> bool {
        self.solved_comparisons.contains_key(&cmp_id)
    }
}

/// A classified execution, reported in execution order.
pub struct ExecutionEvent<'a> {
    pub exec_id: u64,
    pub origin: Origin,
    pub input: &'a [u8],
    pub trace: &'a ExecutionTrace,
    pub novelty: Novelty,
    /// Queue index when the input was kept.
    pub enqueued: Option<usize>,
}

pub trait CampaignObserver {
    fn on_execution(&mut self, _event: &ExecutionEvent<'_>) {}
    fn on_solver_event(&mut self, _event: &SolverEvent) {}
    fn on_solve(&mut self, _record: &ComparisonRecord, _result: &SolveResult) {}
    /// Polled before every mutation execution.
    fn should_stop(&mut self, _executions: u64) -> bool {
        false
    }
}

impl CampaignObserver for () {}

pub struct Campaign {
    pub stats: CampaignStats,
    pub queue: Vec<QueueEntry>,
    pub map: CoverageMap,
}

fn pick_op<R: Rng + ?Sized>(w: &MutationWeights, rng: &mut R) -> usize {
    let mut x = rng.gen_range(0..w.total());
    for (i, weight) in [
        w.bit_flip,
        w.random_byte,
        w.block_duplicate,
        w.block_remove,
        w.splice,
    ]
    .into_iter()
    .enumerate()
    {
        if x < weight {
            return i;
        }
        x -= weight;
    }
    unreachable!()
}

/// Single-point crossover: `a[..s] ++ b[s..]` with `0 < s < min(len)`.
/// `None` when either parent is shorter than two bytes.
pub fn splice_at<R: Rng + ?Sized>(a: &[u8], b: &[u8], rng: &mut R) -> Option<(Vec<u8>, usize)> {
    let m = a.len().min(b.len());
    if m < 2 {
        return None;
    }
    let s = rng.gen_range(1..m);
    let mut out = a[..s].to_vec();
    out.extend_from_slice(&b[s..]);
    Some((out, s))
}

/// Stacked havoc: 1, 2, 4 or 8 operations drawn by weight. The result is
/// never empty and at most [`MAX_INPUT_LEN`] bytes.
pub fn mutate<R: Rng + ?Sized, S: AsRef<[u8]>>(
    input: &[u8],
    corpus: &[S],
    weights: &MutationWeights,
    rng: &mut R,
) -> Vec<u8> {
    let mut buf = input.to_vec();
    buf.truncate(MAX_INPUT_LEN);
    if buf.is_empty() {
        buf.push(rng.gen());
    }
    let stack = 1usize << rng.gen_range(0..4);
    for _ in 0..stack {
        match pick_op(weights, rng) {
            0 => {
                let p = rng.gen_range(0..buf.len());
                buf[p] ^= 1 << rng.gen_range(0..8);
            }
            1 => {
                let p = rng.gen_range(0..buf.len());
                buf[p] = rng.gen();
            }
            2 => {
                let len = rng.gen_range(1..=buf.len().min(MAX_BLOCK));
                let from = rng.gen_range(0..=buf.len() - len);
                let to = rng.gen_range(0..=buf.len());
                if buf.len() + len <= MAX_INPUT_LEN {
                    let block = buf[from..from + len].to_vec();
                    buf.splice(to..to, block);
                }
            }
            3 => {
                if buf.len() > 1 {
                    let len = rng.gen_range(1..=(buf.len() - 1).min(MAX_BLOCK));
                    let from = rng.gen_range(0..=buf.len() - len);
                    buf.drain(from..from + len);
                }
            }
            _ => {
                if !corpus.is_empty() {
                    let other = corpus[rng.gen_range(0..corpus.len())].as_ref();
                    if let Some((out, _)) = splice_at(&buf, other, rng) {
                        buf = out;
                    }
                }
            }
        }
    }
    buf.truncate(MAX_INPUT_LEN);
    buf
}

struct Bridge<'o> {
    observer: &'o mut dyn CampaignObserver,
}

impl SolveObserver for Bridge<'_> {
    fn event(&mut self, event: &SolverEvent) {
        self.observer.on_solver_event(event);
    }
}

struct Engine<'a> {
    program: &'a TargetProgram,
    config: &'a CampaignConfig,
    observer: &'a mut dyn CampaignObserver,
    stats: CampaignStats,
    queue: Vec<QueueEntry>,
    map: CoverageMap,
    blocks: Vec<bool>,
    block_count: usize,
    crash_keys: BTreeSet<(usize, u64)>,
    top_rated: BTreeMap<usize, usize>,
    pending: VecDeque<(usize, ExecutionTrace)>,
    solver_rng: ChaCha8Rng,
}

impl Engine<'_> {
    fn remaining(&self) -> u64 {
        self.config.max_executions - self.stats.executions
    }

    fn run(&mut self, input: &[u8]) -> ExecutionTrace {
        self.stats.executions += 1;
        execute(self.program, input, self.config.instruction_budget)
    }

    /// Record coverage, crashes and solved comparisons for a trace, and
    /// enqueue the input if interesting (or `force`d).
    fn classify(&mut self, input: Vec<u8>, trace: ExecutionTrace, origin: Origin, force: bool) -> Option<usize> {
        let novelty = self.map.record_trace(&trace, self.config.length_feedback_enabled);
        let exec_id = self.stats.executions;
        for b in trace.blocks() {
            let slot = &mut self.blocks[b as usize];
            if !*slot {
                *slot = true;
                self.block_count += 1;
            }
        }
        if self.stats.unique_blocks.last().map(|&(_, n)| n) != Some(self.block_count) {
            self.stats.unique_blocks.push((exec_id, self.block_count));
        }
        if trace.exit == ExitReason::Crash {
            let key = (trace.exit_pc, trace.edge_digest());
            if self.crash_keys.insert(key) {
                self.stats.crashes.push(CrashRecord {
                    exit_pc: key.0,
                    edge_digest: key.1,
                    exec_id,
                    input: input.clone(),
                });
            }
        }
        for r in &trace.comparisons {
            if r.is_match() {
                self.stats.solved_comparisons.entry(r.cmp_id).or_insert(exec_id);
            }
        }

        let enqueued = (force || novelty.is_interesting()).then(|| self.enqueue(&input, &trace, origin, novelty, exec_id));
        self.observer.on_execution(&ExecutionEvent {
            exec_id,
            origin,
            input: &input,
            trace: &trace,
            novelty,
            enqueued,
        });
        if let (Some(idx), true) = (enqueued, self.config.solver_enabled) {
            self.pending.push_back((idx, trace));
        }
        enqueued
    }

    fn enqueue(&mut self, input: &[u8], trace: &ExecutionTrace, origin: Origin, novelty: Novelty, exec_id: u64) -> usize {
        let idx = self.queue.len();
        let mut edge_bits: Vec<usize> = trace.edges.iter().map(|&(a, b)| edge_bit(a, b)).collect();
        edge_bits.sort_unstable();
        edge_bits.dedup();
        for &bit in &edge_bits {
            match self.top_rated.get(&bit) {
                Some(&cur) if self.queue[cur].input.len() <= input.len() => {}
                _ => {
                    self.top_rated.insert(bit, idx);
                }
            }
        }
        self.queue.push(QueueEntry {
            input: FuzzInput::new(idx as u64, input.to_vec()),
            trace_digest: trace.edge_digest(),
            discovered_at: exec_id,
            solver_done: BTreeSet::new(),
            favored: false,
            origin,
            novelty,
            edge_bits,
        });
        idx
    }

    /// Greedy cover of all seen edge bits by top-rated entries.
    fn cull(&mut self) {
        for e in &mut self.queue {
            e.favored = false;
        }
        let mut covered = BTreeSet::new();
        for (&bit, &idx) in &self.top_rated {
            if covered.contains(&bit) {
                continue;
            }
            let e = &mut self.queue[idx];
            e.favored = true;
            covered.extend(e.edge_bits.iter().copied());
        }
    }

    fn drain_solver(&mut self) {
        while let Some((idx, trace)) = self.pending.pop_front() {
            self.solver_stage(idx, &trace);
        }
    }

    fn solver_stage(&mut self, idx: usize, trace: &ExecutionTrace) {
        for rec in &trace.comparisons {
            if rec.is_match() {
                continue;
            }
            if self.stats.is_solved(rec.cmp_id) || self.queue[idx].solver_done.contains(&rec.key()) {
                continue;
            }
            if self.remaining() == 0 {
                return;
            }
            self.queue[idx].solver_done.insert(rec.key());
            self.attempt(idx, rec);
        }
    }

    fn attempt(&mut self, idx: usize, rec: &ComparisonRecord) {
        let before = self.stats.executions;
        let mut exec = ProgramExecutor {
            program: self.program,
            budget: self.config.instruction_budget,
            executions: 0,
        };
        let base = self.queue[idx].input.bytes.clone();
        let mut bridge = Bridge {
            observer: &mut *self.observer,
        };

        let (base, record) = if self.config.colorization_enabled {
            let region = rec.read_cursor.min(base.len());
            let cap = default_color_budget(region).min(self.config.max_executions - before);
            match colorize(&base, rec, &mut exec, &mut self.solver_rng, Some(cap), &mut bridge) {
                Some(c) => (c.input, c.record),
                None => {
                    self.stats.executions += exec.executions;
                    self.stats.solver_executions += exec.executions;
                    self.stats.inconsistent_baselines += 1;
                    return;
                }
            }
        } else {
            (base, rec.clone())
        };

        let left = self.config.max_executions - before - exec.executions;
        let result = if left == 0 {
            None
        } else {
            let options = SolveOptions {
                exec_budget: Some(
                    self.config
                        .solve_options
                        .exec_budget
                        .unwrap_or_else(|| default_exec_budget(base.len()))
                        .min(left),
                ),
                delimiters: self.config.solve_options.delimiters.clone(),
            };
            Some(solve_with_alignments(&base, &record, &mut exec, &options, &mut bridge))
        };
        let count = exec.executions;
        self.stats.executions += count;
        self.stats.solver_executions += count;

        let result = match result {
            None => return,
            Some(Err(SolveError::InconsistentBaseline)) => {
                self.stats.inconsistent_baselines += 1;
                return;
            }
            Some(Ok(r)) => r,
        };
        self.observer.on_solve(&record, &result);
        let mut summary = SolveAttempt {
            entry: idx,
            key: rec.key(),
            status: result.status,
            alignment: result.alignment,
            executions: count,
            enqueued: None,
        };
        if let (SolveStatus::Solved, Some(input)) = (result.status, result.solved_input) {
            if self.remaining() > 0 {
                let trace = self.run(&input);
                let exec_id = self.stats.executions;
                summary.enqueued = self.classify(input, trace, Origin::Solver, true);
                self.stats.solved_comparisons.entry(rec.cmp_id).or_insert(exec_id);
            }
        }
        self.stats.solver_attempts.push(summary);
    }
}

pub fn validate(config: &CampaignConfig, seeds: &[Vec<u8>]) -> Result<(), ConfigError> {
    if config.max_executions == 0 {
        return Err(ConfigError::ZeroExecutionBudget);
    }
    if config.wall_clock_limit == Some(0) {
        return Err(ConfigError::ZeroWallClock);
    }
    if config.instruction_budget == 0 {
        return Err(ConfigError::ZeroInstructionBudget);
    }
    if config.energy == 0 {
        return Err(ConfigError::ZeroEnergy);
    }
    if config.weights.total() == 0 {
        return Err(ConfigError::ZeroWeights);
    }
    if seeds.is_empty() {
        return Err(ConfigError::NoSeeds);
    }
    Ok(())
}

/// Run a campaign until the execution budget is spent or the observer asks
/// to stop. Seeds are executed first and always enqueued.
pub fn run_campaign(
    program: &TargetProgram,
    config: &CampaignConfig,
    seeds: &[Vec<u8>],
    observer: &mut dyn CampaignObserver,
) -> Result<Campaign, ConfigError> {
    validate(config, seeds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut engine = Engine {
        program,
        config,
        observer,
        stats: CampaignStats::default(),
        queue: Vec::new(),
        map: CoverageMap::new(),
        blocks: alloc::vec![false; program.instructions().len()],
        block_count: 0,
        crash_keys: BTreeSet::new(),
        top_rated: BTreeMap::new(),
        pending: VecDeque::new(),
        solver_rng: ChaCha8Rng::seed_from_u64(config.rng_seed ^ SOLVER_STREAM),
    };

    for seed in seeds {
        if engine.remaining() == 0 {
            break;
        }
        let trace = engine.run(seed);
        engine.classify(seed.clone(), trace, Origin::Seed, true);
        engine.drain_solver();
    }

    'campaign: loop {
        engine.cull();
        let (favored, rest): (Vec<usize>, Vec<usize>) =
            (0..engine.queue.len()).partition(|&i| engine.queue[i].favored);
        for idx in favored.into_iter().chain(rest) {
            for _ in 0..config.energy {
                if engine.remaining() == 0 {
                    break 'campaign;
                }
                if engine.observer.should_stop(engine.stats.executions) {
                    engine.stats.stopped_early = true;
                    break 'campaign;
                }
                let child = mutate(&engine.queue[idx].input, &engine.queue, &config.weights, &mut rng);
                let trace = engine.run(&child);
                engine.classify(child, trace, Origin::Mutation, false);
                engine.drain_solver();
            }
        }
    }

    Ok(Campaign {
        stats: engine.stats,
        queue: engine.queue,
        map: engine.map,
    })
}
