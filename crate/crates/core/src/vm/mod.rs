//! Deterministic virtual microcontroller.
//!
//! Programs are written in a small assembly ([`parse_scenario`]) with
//! separate ROM and RAM segments and a set of declared peripherals. Each
//! `READ_REG` consumes the next byte of the fuzz input regardless of which
//! peripheral it names, so data bytes of one peripheral end up scattered
//! between status and noise reads of others.

mod exec;
mod parse;
mod program;

pub use exec::{
    execute, BlockId, ExecutionTrace, ExitReason, ReadEvent, DEFAULT_BUDGET, ENTRY_BLOCK,
};
pub use parse::{escape, parse_scenario, serialize, unescape, ParseError};
pub use program::{
    Builtin, Instruction, Opcode, PeriphId, ProgramError, Reg, RomSymbol, Segment, Src,
    TargetProgram, NUM_REGS, RAM_BASE, ROM_BASE,
};

use alloc::vec::Vec;

use crate::hash::fmix32;

/// An immutable fuzz input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FuzzInput {
    pub bytes: Vec<u8>,
    pub id: u64,
}

impl FuzzInput {
    pub fn new(id: u64, bytes: Vec<u8>) -> Self {
        Self { bytes, id }
    }
}

impl core::ops::Deref for FuzzInput {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        &self.bytes
    }
}

/// Bitmap index of the edge `prev -> cur`. `map_size` must be a power of two.
///
/// Direction-sensitive: the predecessor hash is shifted before mixing, so
/// `(a, b)` and `(b, a)` land in different slots.
pub fn block_edge_id(prev: BlockId, cur: BlockId, map_size: usize) -> usize {
    debug_assert!(map_size.is_power_of_two());
    let h = (fmix32(prev ^ 0x9e37_79b9) >> 1) ^ fmix32(cur);
    h as usize & (map_size - 1)
}
