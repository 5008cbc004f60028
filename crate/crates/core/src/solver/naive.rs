//! Exhaustive baseline: try every combination of candidate positions.

use alloc::vec::Vec;

use super::{candidate_positions, Executor, SolveStatus};
use crate::cmplog::{find_record, ComparisonRecord};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NaiveOutcome {
    pub status: SolveStatus,
    /// Product of per-byte candidate counts over the read region.
    pub combinations: u128,
    pub executions_used: u64,
    pub solved_input: Option<Vec<u8>>,
}

/// Enumerate replacement position combinations without any feedback.
///
/// Every observed byte gets the candidate positions holding its value among
/// the bytes read before the comparison. The reported combination count is
/// the full product; enumeration itself only visits strictly increasing
/// position tuples, one execution each, until a tuple makes the strings
/// equal or `combo_budget` executions have been spent.
pub fn naive_search<E: Executor + ?Sized>(
    base_input: &[u8],
    record: &ComparisonRecord,
    executor: &mut E,
    combo_budget: u64,
) -> NaiveOutcome {
    let observed = record.observed_str();
    let ideal = record.ideal_str();
    let limit = record.read_cursor.min(base_input.len());
    let lists: Vec<Vec<usize>> = observed
        .iter()
        .map(|&b| candidate_positions(base_input, b, 0, limit))
        .collect();
    let combinations = lists
        .iter()
        .fold(1u128, |acc, l| acc.saturating_mul(l.len() as u128));
    let mut out = NaiveOutcome {
        status: SolveStatus::UnmappedByte(0),
        combinations,
        executions_used: 0,
        solved_input: None,
    };
    if observed.len() != ideal.len() {
        out.status = SolveStatus::UnmappedByte(observed.len().min(ideal.len()));
        return out;
    }
    if let Some(i) = lists.iter().position(|l| l.is_empty()) {
        out.status = SolveStatus::UnmappedByte(i);
        return out;
    }

    let mut work = base_input.to_vec();
    let mut search = Search {
        lists: &lists,
        ideal,
        key: record.key(),
        exec: executor,
        budget: combo_budget,
        used: 0,
        work: &mut work,
        original: base_input,
    };
    let found = search.dfs(0, 0);
    out.executions_used = search.used;
    match found {
        Some(true) => {
            out.status = SolveStatus::Solved;
            out.solved_input = Some(work);
        }
        Some(false) => out.status = SolveStatus::UnmappedByte(0),
        None => out.status = SolveStatus::BudgetExhausted,
    }
    out
}

struct Search<'a, E: Executor + ?Sized> {
    lists: &'a [Vec<usize>],
    ideal: &'a [u8],
    key: crate::cmplog::CmpKey,
    exec: &'a mut E,
    budget: u64,
    used: u64,
    work: &'a mut Vec<u8>,
    original: &'a [u8],
}

impl<E: Executor + ?Sized> Search<'_, E> {
    /// `Some(true)` solved, `Some(false)` exhausted, `None` out of budget.
    fn dfs(&mut self, depth: usize, min_pos: usize) -> Option<bool> {
        if depth == self.lists.len() {
            if self.used >= self.budget {
                return None;
            }
            self.used += 1;
            let t = self.exec.execute(self.work);
            let ok = find_record(&t, self.key).is_some_and(|r| r.observed_str() == self.ideal);
            return Some(ok);
        }
        for &j in &self.lists[depth] {
            if j < min_pos {
                continue;
            }
            self.work[j] = self.ideal[depth];
            let r = self.dfs(depth + 1, j + 1);
            if r != Some(false) {
                return r;
            }
            self.work[j] = self.original[j];
        }
        Some(false)
    }
}
