//! Input colorization: raise the entropy of the bytes read before a
//! comparison without changing whether or how the comparison is reached.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Executor, SolveObserver, SolverEvent, Outcome, Phase};
use crate::cmplog::{find_record, ComparisonRecord};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Colorized {
    pub input: Vec<u8>,
    /// The comparison record as reached by `input`.
    pub record: ComparisonRecord,
    pub executions: u64,
}

/// Shannon entropy in bits per byte.
pub fn byte_entropy(bytes: &[u8]) -> f64 {
    if bytes.is_empty() {
        return 0.0;
    }
    let mut counts = [0u32; 256];
    for &b in bytes {
        counts[b as usize] += 1;
    }
    let n = bytes.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * libm::log2(p)
        })
        .sum()
}

pub fn default_color_budget(region_len: usize) -> u64 {
    2 * region_len as u64 + 16
}

struct Deck {
    cards: Vec<u8>,
}

impl Deck {
    fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> u8 {
        if self.cards.is_empty() {
            self.cards = (0..=255u8).collect();
            self.cards.shuffle(rng);
        }
        self.cards.pop().unwrap()
    }
}

/// Replace spans of the read region with fresh random bytes, keeping a span
/// only if the comparison at `record`'s key is still reached with the same
/// observed length after the same number of reads. Rejected spans are split
/// in half and retried until the budget runs out.
///
/// Returns the base input unchanged (with its re-executed record) if the
/// result would not have higher entropy. `None` when the base input does
/// not reach the comparison.
pub fn colorize<E: Executor + ?Sized, R: Rng + ?Sized>(
    base_input: &[u8],
    record: &ComparisonRecord,
    executor: &mut E,
    rng: &mut R,
    budget: Option<u64>,
    observer: &mut dyn SolveObserver,
) -> Option<Colorized> {
    let key = record.key();
    let base_trace = executor.execute(base_input);
    let mut executions = 1u64;
    let base_rec = find_record(&base_trace, key)?.clone();
    let region = base_rec.read_cursor.min(base_input.len());
    let budget = budget.unwrap_or_else(|| default_color_budget(region));

    let mut work = base_input.to_vec();
    let mut best = base_rec.clone();
    let mut deck = Deck { cards: Vec::new() };
    let mut spans = alloc::vec![(0usize, region)];
    while let Some((lo, hi)) = spans.pop() {
        if lo >= hi {
            continue;
        }
        if executions >= budget {
            break;
        }
        let saved = work[lo..hi].to_vec();
        for b in &mut work[lo..hi] {
            *b = deck.next(rng);
        }
        executions += 1;
        let t = executor.execute(&work);
        let keep = find_record(&t, key).filter(|r| {
            r.observed_len == base_rec.observed_len && r.read_cursor == base_rec.read_cursor
        });
        let outcome = if let Some(r) = keep {
            best = r.clone();
            Outcome::Accepted
        } else {
            work[lo..hi].copy_from_slice(&saved);
            if hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                spans.push((mid, hi));
                spans.push((lo, mid));
            }
            Outcome::Rejected
        };
        observer.event(&SolverEvent {
            key,
            phase: Phase::Color,
            i: lo,
            j: Some(hi),
            outcome,
            execs: executions,
        });
    }

    if byte_entropy(&work[..region]) > byte_entropy(&base_input[..region]) {
        Some(Colorized {
            input: work,
            record: best,
            executions,
        })
    } else {
        Some(Colorized {
            input: base_input.to_vec(),
            record: base_rec,
            executions,
        })
    }
}
