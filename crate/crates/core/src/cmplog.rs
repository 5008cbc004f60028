//! Comparison logging: detection of string-comparison call sites and the
//! oracles the solver queries (observed buffer, bytes read at compare time).

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::coverage::strlen_bounded;
use crate::vm::{ExecutionTrace, Segment, TargetProgram};

/// Longest string snapshot taken from either side of a comparison.
pub const MAX_STRLEN: usize = 128;
/// Most distinct comparison sites recorded per trace.
pub const MAX_CMP_SITES: usize = 256;
/// Most hits of a single site recorded per trace.
pub const MAX_HITS_PER_SITE: u32 = 32;

/// One dynamic occurrence of a comparison: call-site index plus the ordinal
/// of the hit within the trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CmpKey {
    pub cmp_id: usize,
    pub hit_index: u32,
}

impl CmpKey {
    pub fn new(cmp_id: usize, hit_index: u32) -> Self {
        Self { cmp_id, hit_index }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComparisonRecord {
    pub cmp_id: usize,
    pub hit_index: u32,
    /// Snapshot of the RAM-side argument, taken before the builtin ran.
    pub observed: Vec<u8>,
    /// Snapshot of the ROM-side argument.
    pub ideal: Vec<u8>,
    /// Input bytes consumed when the call executed.
    pub read_cursor: usize,
    pub observed_len: usize,
    pub ideal_len: usize,
}

impl ComparisonRecord {
    pub fn key(&self) -> CmpKey {
        CmpKey::new(self.cmp_id, self.hit_index)
    }

    pub fn observed_str(&self) -> &[u8] {
        &self.observed[..self.observed_len]
    }

    pub fn ideal_str(&self) -> &[u8] {
        &self.ideal[..self.ideal_len]
    }

    /// Both sides hold the same NUL-terminated string.
    pub fn is_match(&self) -> bool {
        self.observed_str() == self.ideal_str()
    }
}

/// Outcome of classifying a `CALL`'s two pointer arguments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpClass {
    RomRam { ideal_addr: u32, observed_addr: u32 },
    NotComparison,
}

/// One argument pointing into ROM and the other into RAM makes a call a
/// candidate comparison, whatever the callee is.
pub fn detect_comparison(
    _call_site: usize,
    arg0: u32,
    arg1: u32,
    program: &TargetProgram,
) -> CmpClass {
    match (program.segment_of(arg0), program.segment_of(arg1)) {
        (Some(Segment::Rom), Some(Segment::Ram)) => CmpClass::RomRam {
            ideal_addr: arg0,
            observed_addr: arg1,
        },
        (Some(Segment::Ram), Some(Segment::Rom)) => CmpClass::RomRam {
            ideal_addr: arg1,
            observed_addr: arg0,
        },
        _ => CmpClass::NotComparison,
    }
}

/// Records matching `key`, if that occurrence happened in `trace`.
pub fn find_record(trace: &ExecutionTrace, key: CmpKey) -> Option<&ComparisonRecord> {
    trace
        .comparisons
        .iter()
        .find(|r| r.cmp_id == key.cmp_id && r.hit_index == key.hit_index)
}

pub fn get_observed(trace: &ExecutionTrace, key: CmpKey) -> Option<&[u8]> {
    find_record(trace, key).map(|r| r.observed.as_slice())
}

pub fn get_read_bytes(trace: &ExecutionTrace, key: CmpKey) -> Option<usize> {
    find_record(trace, key).map(|r| r.read_cursor)
}

/// Per-execution recorder enforcing the site and hit limits.
#[derive(Default)]
pub(crate) struct Recorder {
    hits: BTreeMap<usize, u32>,
    pub records: Vec<ComparisonRecord>,
    pub overflow: u32,
}

impl Recorder {
    pub fn on_call(
        &mut self,
        program: &TargetProgram,
        ram: &[u8],
        call_site: usize,
        arg0: u32,
        arg1: u32,
        cursor: usize,
    ) {
        let CmpClass::RomRam {
            ideal_addr,
            observed_addr,
        } = detect_comparison(call_site, arg0, arg1, program)
        else {
            return;
        };
        let sites = self.hits.len();
        let hit = match self.hits.get_mut(&call_site) {
            Some(h) => h,
            None if sites >= MAX_CMP_SITES => {
                self.overflow += 1;
                return;
            }
            None => self.hits.entry(call_site).or_insert(0),
        };
        if *hit >= MAX_HITS_PER_SITE {
            self.overflow += 1;
            return;
        }
        let hit_index = *hit;
        *hit += 1;
        let observed = snapshot(program, ram, observed_addr);
        let ideal = snapshot(program, ram, ideal_addr);
        self.records.push(ComparisonRecord {
            cmp_id: call_site,
            hit_index,
            observed_len: strlen_bounded(&observed, MAX_STRLEN),
            ideal_len: strlen_bounded(&ideal, MAX_STRLEN),
            observed,
            ideal,
            read_cursor: cursor,
        });
    }
}

/// Copy up to [`MAX_STRLEN`] bytes starting at `addr`, stopping at the end of
/// the containing segment.
pub(crate) fn snapshot(program: &TargetProgram, ram: &[u8], addr: u32) -> Vec<u8> {
    let Some(seg) = program.segment_of(addr) else {
        return Vec::new();
    };
    let end = program.segment_end(seg);
    let len = ((end - addr) as usize).min(MAX_STRLEN);
    match seg {
        Segment::Rom => {
            let off = (addr - crate::vm::ROM_BASE) as usize;
            program.rom()[off..off + len].to_vec()
        }
        Segment::Ram => {
            let off = (addr - crate::vm::RAM_BASE) as usize;
            ram[off..off + len].to_vec()
        }
    }
}
