//! Feedback-guided search and replacement for string comparisons whose
//! observed bytes are scattered through a stream-consumed input.
//!
//! For every byte of the observed string the solver scans the already-read
//! part of the input for candidate positions holding that byte, writes the
//! corresponding ideal byte at one candidate, re-executes, and keeps the
//! write only when the observed buffer changed to the ideal byte at that
//! position. Candidates are restricted to bytes read before the comparison
//! and, after the first byte, to bytes read after the previously mapped one.
//! Over-long observed strings are shortened by writing a token delimiter at
//! the byte that feeds the first surplus character.

mod colorize;
mod naive;

pub use colorize::{byte_entropy, colorize, default_color_budget, Colorized};
pub use naive::{naive_search, NaiveOutcome};

use alloc::vec::Vec;
use core::fmt;

use crate::cmplog::{find_record, CmpKey, ComparisonRecord};
use crate::vm::{execute, ExecutionTrace, TargetProgram};

/// Anything that can run the target on an input.
pub trait Executor {
    fn execute(&mut self, input: &[u8]) -> ExecutionTrace;
}

impl<F: FnMut(&[u8]) -> ExecutionTrace> Executor for F {
    fn execute(&mut self, input: &[u8]) -> ExecutionTrace {
        self(input)
    }
}

/// Executes a program with a fixed instruction budget, counting runs.
pub struct ProgramExecutor<'p> {
    pub program: &'p TargetProgram,
    pub budget: u64,
    pub executions: u64,
}

impl<'p> ProgramExecutor<'p> {
    pub fn new(program: &'p TargetProgram) -> Self {
        Self {
            program,
            budget: crate::vm::DEFAULT_BUDGET,
            executions: 0,
        }
    }
}

impl Executor for ProgramExecutor<'_> {
    fn execute(&mut self, input: &[u8]) -> ExecutionTrace {
        self.executions += 1;
        execute(self.program, input, self.budget)
    }
}

/// Ordered token delimiters tried when contracting a string.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DelimiterSet(Vec<u8>);

pub const DEFAULT_DELIMITERS: [u8; 7] = [b' ', b'\n', b'\r', b'\t', 0, b',', b';'];

impl DelimiterSet {
    /// `None` unless the set is non-empty and contains space and newline.
    pub fn new(bytes: Vec<u8>) -> Option<Self> {
        (bytes.contains(&b' ') && bytes.contains(&b'\n')).then_some(Self(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for DelimiterSet {
    fn default() -> Self {
        Self(DEFAULT_DELIMITERS.to_vec())
    }
}

/// Default per-attempt execution budget.
pub fn default_exec_budget(input_len: usize) -> u64 {
    4 * input_len as u64 + 64
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SolveOptions {
    /// `None` selects [`default_exec_budget`].
    pub exec_budget: Option<u64>,
    pub delimiters: DelimiterSet,
}

/// Where the ideal string is placed within the observed string.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Alignment {
    /// Ideal byte `k` replaces observed byte `k`; success needs equality.
    Head,
    /// Ideal bytes replace the last `ideal_len` observed bytes; success
    /// needs the observed string to end with the ideal string.
    Tail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SolveStatus {
    Solved,
    /// No candidate position for observed byte `i` changed it to the ideal byte.
    UnmappedByte(usize),
    /// The surplus byte was located but no delimiter contracted the string.
    ContractionTried,
    /// Every replacement attempted for the current byte made the comparison
    /// unreachable.
    NotReached,
    BudgetExhausted,
}

impl SolveStatus {
    pub fn name(&self) -> &'static str {
        match self {
            SolveStatus::Solved => "solved",
            SolveStatus::UnmappedByte(_) => "unmapped_byte",
            SolveStatus::ContractionTried => "contraction_tried",
            SolveStatus::NotReached => "not_reached",
            SolveStatus::BudgetExhausted => "budget_exhausted",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Locked `(observed position, input position)` pairs.
    pub mapped: Vec<(usize, usize)>,
    pub executions_used: u64,
    pub solved_input: Option<Vec<u8>>,
    pub alignment: Alignment,
}

impl SolveResult {
    pub fn is_solved(&self) -> bool {
        self.status == SolveStatus::Solved
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolveError {
    /// Re-running the base input did not reproduce the comparison record.
    InconsistentBaseline,
}

impl core::error::Error for SolveError {}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::InconsistentBaseline => {
                write!(f, "base input no longer reaches the comparison it was recorded at")
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Phase {
    Map,
    Contract,
    Align,
    Color,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Outcome {
    Hit,
    Miss,
    NotReached,
    Located,
    Solved,
    Failed,
    Accepted,
    Rejected,
}

/// One solver step, for post-hoc analysis.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverEvent {
    pub key: CmpKey,
    pub phase: Phase,
    pub i: usize,
    pub j: Option<usize>,
    pub outcome: Outcome,
    /// Executions used by the attempt so far.
    pub execs: u64,
}

pub trait SolveObserver {
    fn event(&mut self, event: &SolverEvent);
}

impl SolveObserver for () {
    fn event(&mut self, _: &SolverEvent) {}
}

impl SolveObserver for Vec<SolverEvent> {
    fn event(&mut self, event: &SolverEvent) {
        self.push(event.clone());
    }
}

/// Positions `j` in `[from, to)` with `input[j] == value`, ascending.
pub fn candidate_positions(input: &[u8], value: u8, from: usize, to: usize) -> Vec<usize> {
    let to = to.min(input.len());
    if from >= to {
        return Vec::new();
    }
    (from..to).filter(|&j| input[j] == value).collect()
}

fn satisfied(rec: &ComparisonRecord, ideal: &[u8], alignment: Alignment) -> bool {
    match alignment {
        Alignment::Head => rec.observed_str() == ideal,
        Alignment::Tail => rec.observed_str().ends_with(ideal),
    }
}

struct Attempt<'a, E: Executor + ?Sized> {
    exec: &'a mut E,
    observer: &'a mut dyn SolveObserver,
    key: CmpKey,
    alignment: Alignment,
    budget: u64,
    used: u64,
    original: Vec<u8>,
    working: Vec<u8>,
    mapped: Vec<(usize, usize)>,
}

impl<E: Executor + ?Sized> Attempt<'_, E> {
    fn run(&mut self) -> Option<ExecutionTrace> {
        if self.used >= self.budget {
            return None;
        }
        self.used += 1;
        Some(self.exec.execute(&self.working))
    }

    fn emit(&mut self, phase: Phase, i: usize, j: Option<usize>, outcome: Outcome) {
        let ev = SolverEvent {
            key: self.key,
            phase,
            i,
            j,
            outcome,
            execs: self.used,
        };
        self.observer.event(&ev);
    }

    fn finish(self, status: SolveStatus) -> SolveResult {
        let solved_input = (status == SolveStatus::Solved).then(|| self.working.clone());
        SolveResult {
            status,
            mapped: self.mapped,
            executions_used: self.used,
            solved_input,
            alignment: self.alignment,
        }
    }
}

/// Solve the comparison `record` (taken from a trace of `base_input`) with
/// the ideal string aligned to the head of the observed string.
///
/// The first execution re-runs `base_input` to confirm the record; when the
/// strings already match it doubles as the verification run.
pub fn solve<E: Executor + ?Sized>(
    base_input: &[u8],
    record: &ComparisonRecord,
    executor: &mut E,
    options: &SolveOptions,
    observer: &mut dyn SolveObserver,
) -> Result<SolveResult, SolveError> {
    solve_aligned(base_input, record, Alignment::Head, executor, options, observer)
}

pub fn solve_aligned<E: Executor + ?Sized>(
    base_input: &[u8],
    record: &ComparisonRecord,
    alignment: Alignment,
    executor: &mut E,
    options: &SolveOptions,
    observer: &mut dyn SolveObserver,
) -> Result<SolveResult, SolveError> {
    let key = record.key();
    let mut at = Attempt {
        exec: executor,
        observer,
        key,
        alignment,
        budget: options
            .exec_budget
            .unwrap_or_else(|| default_exec_budget(base_input.len())),
        used: 0,
        original: base_input.to_vec(),
        working: base_input.to_vec(),
        mapped: Vec::new(),
    };
    let ideal = record.ideal_str().to_vec();

    let Some(baseline) = at.run() else {
        return Ok(at.finish(SolveStatus::BudgetExhausted));
    };
    let base = match find_record(&baseline, key) {
        Some(r) if r.observed_str() == record.observed_str() => r.clone(),
        _ => return Err(SolveError::InconsistentBaseline),
    };
    if satisfied(&base, &ideal, alignment) {
        return Ok(at.finish(SolveStatus::Solved));
    }
    let observed = base.observed_str().to_vec();
    let offset = match alignment {
        Alignment::Head => 0,
        Alignment::Tail if observed.len() > ideal.len() => observed.len() - ideal.len(),
        Alignment::Tail => return Ok(at.finish(SolveStatus::UnmappedByte(0))),
    };
    if alignment == Alignment::Tail {
        at.emit(Phase::Align, offset, None, Outcome::Hit);
    }

    let input_len = base_input.len();
    let mut last_index = 0usize;
    let mut read_limit = base.read_cursor.min(input_len);
    let mut latest = base;

    for i in offset..observed.len() {
        let k = i - offset;
        if k >= ideal.len() {
            let status = contract_string(
                &mut at,
                &observed,
                &ideal,
                i,
                last_index,
                read_limit,
                &options.delimiters,
            );
            return Ok(at.finish(status));
        }
        // A byte that already holds its ideal value is located with a
        // probe value instead, then left as is.
        let already = observed[i] == ideal[k];
        let write = if already {
            probe_value(observed[i], &options.delimiters)
        } else {
            ideal[k]
        };
        let candidates = candidate_positions(&at.working, observed[i], last_index, read_limit);
        let mut reached = candidates.is_empty();
        let mut locked = None;
        for j in candidates {
            at.working[j] = write;
            let Some(trace) = at.run() else {
                at.working[j] = at.original[j];
                return Ok(at.finish(SolveStatus::BudgetExhausted));
            };
            match find_record(&trace, key) {
                Some(r) if r.observed.get(i) == Some(&write) => {
                    at.emit(Phase::Map, i, Some(j), Outcome::Hit);
                    if already {
                        at.working[j] = at.original[j];
                        locked = Some((j, None));
                    } else {
                        locked = Some((j, Some(r.clone())));
                    }
                    break;
                }
                Some(_) => {
                    reached = true;
                    at.emit(Phase::Map, i, Some(j), Outcome::Miss);
                }
                None => at.emit(Phase::Map, i, Some(j), Outcome::NotReached),
            }
            at.working[j] = at.original[j];
        }
        let Some((j, rec)) = locked else {
            let status = if reached {
                SolveStatus::UnmappedByte(i)
            } else {
                SolveStatus::NotReached
            };
            return Ok(at.finish(status));
        };
        at.mapped.push((i, j));
        last_index = j + 1;
        if let Some(rec) = rec {
            read_limit = rec.read_cursor.min(input_len);
            latest = rec;
        }
    }

    if satisfied(&latest, &ideal, alignment) {
        at.emit(Phase::Map, observed.len(), None, Outcome::Solved);
        return Ok(at.finish(SolveStatus::Solved));
    }
    // Observed shorter than ideal: extending in place is left to length
    // feedback finding longer observed strings.
    Ok(at.finish(SolveStatus::UnmappedByte(observed.len())))
}

/// A printable byte distinct from `value` that is not a delimiter.
fn probe_value(value: u8, delimiters: &DelimiterSet) -> u8 {
    b"~!#"
        .iter()
        .copied()
        .find(|&s| s != value && !delimiters.as_bytes().contains(&s))
        .unwrap_or(value ^ 0x01)
}

fn contract_string<E: Executor + ?Sized>(
    at: &mut Attempt<'_, E>,
    observed: &[u8],
    ideal: &[u8],
    i: usize,
    last_index: usize,
    read_limit: usize,
    delimiters: &DelimiterSet,
) -> SolveStatus {
    let value = observed[i];
    let sentinel = probe_value(value, delimiters);

    // Locate the input byte feeding observed[i].
    let mut located = None;
    for j in candidate_positions(&at.working, value, last_index, read_limit) {
        at.working[j] = sentinel;
        let Some(trace) = at.run() else {
            at.working[j] = at.original[j];
            return SolveStatus::BudgetExhausted;
        };
        at.working[j] = at.original[j];
        let hit = find_record(&trace, at.key).is_some_and(|r| r.observed.get(i) == Some(&sentinel));
        at.emit(
            Phase::Contract,
            i,
            Some(j),
            if hit { Outcome::Located } else { Outcome::Miss },
        );
        if hit {
            located = Some(j);
            break;
        }
    }
    let Some(j) = located else {
        return SolveStatus::UnmappedByte(i);
    };

    for &d in delimiters.as_bytes() {
        at.working[j] = d;
        let Some(trace) = at.run() else {
            at.working[j] = at.original[j];
            return SolveStatus::BudgetExhausted;
        };
        if find_record(&trace, at.key).is_some_and(|r| r.observed_str() == ideal) {
            at.mapped.push((i, j));
            at.emit(Phase::Contract, i, Some(j), Outcome::Solved);
            return SolveStatus::Solved;
        }
        at.working[j] = at.original[j];
        at.emit(Phase::Contract, i, Some(j), Outcome::Failed);
    }
    SolveStatus::ContractionTried
}

/// Head-aligned solve, retried tail-aligned when it fails on an observed
/// string longer than the ideal one. Both runs share the execution budget.
///
/// Returns the first solved result, otherwise the result with more locked
/// positions (ties go to the head alignment).
pub fn solve_with_alignments<E: Executor + ?Sized>(
    base_input: &[u8],
    record: &ComparisonRecord,
    executor: &mut E,
    options: &SolveOptions,
    observer: &mut dyn SolveObserver,
) -> Result<SolveResult, SolveError> {
    let head = solve_aligned(
        base_input,
        record,
        Alignment::Head,
        executor,
        options,
        observer,
    )?;
    if head.is_solved() || record.observed_len <= record.ideal_len {
        return Ok(head);
    }
    let budget = options
        .exec_budget
        .unwrap_or_else(|| default_exec_budget(base_input.len()));
    let remaining = budget.saturating_sub(head.executions_used);
    if remaining == 0 {
        return Ok(head);
    }
    let tail_options = SolveOptions {
        exec_budget: Some(remaining),
        delimiters: options.delimiters.clone(),
    };
    let mut tail = solve_aligned(
        base_input,
        record,
        Alignment::Tail,
        executor,
        &tail_options,
        observer,
    )?;
    let total = head.executions_used + tail.executions_used;
    if tail.is_solved() || tail.mapped.len() > head.mapped.len() {
        tail.executions_used = total;
        Ok(tail)
    } else {
        Ok(SolveResult {
            executions_used: total,
            ..head
        })
    }
}
