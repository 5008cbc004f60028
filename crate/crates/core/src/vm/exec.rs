use alloc::vec;
use alloc::vec::Vec;

use super::program::{Builtin, Instruction, PeriphId, Reg, Segment, Src, TargetProgram, NUM_REGS};
use super::{RAM_BASE, ROM_BASE};
use crate::cmplog::{ComparisonRecord, Recorder};

/// Default instruction budget per execution.
pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// Pseudo block id used as the predecessor of the entry block.
pub const ENTRY_BLOCK: u32 = u32::MAX;

/// Basic block id: index of the block's leading instruction.
pub type BlockId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ExitReason {
    Halt,
    Crash,
    InputExhausted,
    BudgetExhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReadEvent {
    pub cursor: usize,
    pub periph: u16,
}

/// Everything observable about one execution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecutionTrace {
    /// Distinct `(from, to)` block transitions, sorted.
    pub edges: Vec<(BlockId, BlockId)>,
    pub comparisons: Vec<ComparisonRecord>,
    pub read_log: Vec<ReadEvent>,
    pub exit: ExitReason,
    /// Instruction index the run stopped at.
    pub exit_pc: usize,
    pub final_cursor: usize,
    pub instructions_executed: u64,
    /// Comparison hits dropped by the per-trace record limits.
    pub cmp_overflow: u32,
}

impl ExecutionTrace {
    /// Distinct blocks entered, sorted.
    pub fn blocks(&self) -> Vec<BlockId> {
        let mut b: Vec<BlockId> = self.edges.iter().map(|e| e.1).collect();
        b.sort_unstable();
        b.dedup();
        b
    }

    /// Hash of the edge set, stable across platforms.
    pub fn edge_digest(&self) -> u64 {
        let mut h = crate::hash::Fnv64::default();
        for (a, b) in &self.edges {
            h.write_u32(*a);
            h.write_u32(*b);
        }
        h.finish()
    }
}

/// A fault stops the run as a crash.
struct Fault;

struct Machine<'p> {
    program: &'p TargetProgram,
    regs: [u32; NUM_REGS],
    ram: Vec<u8>,
}

impl Machine<'_> {
    fn reg(&self, r: Reg) -> u32 {
        self.regs[usize::from(r.0)]
    }

    fn value(&self, s: &Src) -> u32 {
        match s {
            Src::Reg(r) => self.reg(*r),
            Src::Imm(v) => *v,
        }
    }

    fn load(&self, addr: u32) -> Result<u8, Fault> {
        match self.program.segment_of(addr) {
            Some(Segment::Rom) => Ok(self.program.rom()[(addr - ROM_BASE) as usize]),
            Some(Segment::Ram) => Ok(self.ram[(addr - RAM_BASE) as usize]),
            None => Err(Fault),
        }
    }

    fn store(&mut self, addr: u32, byte: u8) -> Result<(), Fault> {
        match self.program.segment_of(addr) {
            Some(Segment::Ram) => {
                self.ram[(addr - RAM_BASE) as usize] = byte;
                Ok(())
            }
            _ => Err(Fault),
        }
    }

    fn cstr_len(&self, addr: u32) -> Result<u32, Fault> {
        let mut n = 0u32;
        while self.load(addr.wrapping_add(n))? != 0 {
            n += 1;
        }
        Ok(n)
    }

    fn call(&mut self, builtin: Builtin, a: u32, b: u32) -> Result<u32, Fault> {
        Ok(match builtin {
            Builtin::Strcmp => {
                let mut i = 0u32;
                loop {
                    let (x, y) = (self.load(a.wrapping_add(i))?, self.load(b.wrapping_add(i))?);
                    if x != y {
                        break 1;
                    }
                    if x == 0 {
                        break 0;
                    }
                    i += 1;
                }
            }
            Builtin::Strncmp => {
                let n = self.regs[2];
                let mut result = 0;
                for i in 0..n {
                    let (x, y) = (self.load(a.wrapping_add(i))?, self.load(b.wrapping_add(i))?);
                    if x != y {
                        result = 1;
                        break;
                    }
                    if x == 0 {
                        break;
                    }
                }
                result
            }
            Builtin::Memcmp => {
                let n = self.regs[2];
                let mut result = 0;
                for i in 0..n {
                    if self.load(a.wrapping_add(i))? != self.load(b.wrapping_add(i))? {
                        result = 1;
                        break;
                    }
                }
                result
            }
            Builtin::Strstr => {
                let hay = self.cstr_len(a)?;
                let needle = self.cstr_len(b)?;
                let mut found = 0;
                if needle <= hay {
                    'outer: for start in 0..=hay - needle {
                        for k in 0..needle {
                            if self.load(a.wrapping_add(start + k))? != self.load(b.wrapping_add(k))? {
                                continue 'outer;
                            }
                        }
                        found = a.wrapping_add(start);
                        break;
                    }
                }
                found
            }
            Builtin::Print => 0,
        })
    }
}

/// Run `program` on `input` for at most `budget` instructions.
///
/// Every `READ_REG` consumes exactly one input byte; reading past the end of
/// the input stops the run with [`ExitReason::InputExhausted`]. Memory faults
/// (wild pointers, stores outside RAM) stop it with [`ExitReason::Crash`].
pub fn execute(program: &TargetProgram, input: &[u8], budget: u64) -> ExecutionTrace {
    let mut m = Machine {
        program,
        regs: [0; NUM_REGS],
        ram: vec![0; program.ram_size() as usize],
    };
    let insns = program.instructions();
    let mut cursor = 0usize;
    let mut pc = 0usize;
    let mut block: BlockId = 0;
    let mut edges = vec![(ENTRY_BLOCK, 0)];
    let mut read_log = Vec::new();
    let mut cmplog = Recorder::default();
    let mut executed = 0u64;

    let exit = loop {
        if executed >= budget {
            break ExitReason::BudgetExhausted;
        }
        let Some(insn) = insns.get(pc) else {
            break ExitReason::Halt;
        };
        executed += 1;
        let mut next = pc + 1;
        match insn {
            Instruction::ReadReg { dst, periph } => {
                let Some(&byte) = input.get(cursor) else {
                    break ExitReason::InputExhausted;
                };
                let PeriphId(periph) = *periph;
                read_log.push(super::ReadEvent { cursor, periph });
                cursor += 1;
                m.regs[usize::from(dst.0)] = u32::from(byte);
            }
            Instruction::LoadI { dst, value } => m.regs[usize::from(dst.0)] = *value,
            Instruction::Mov { dst, src } => m.regs[usize::from(dst.0)] = m.reg(*src),
            Instruction::And { dst, lhs, rhs } => {
                m.regs[usize::from(dst.0)] = m.reg(*lhs) & m.value(rhs)
            }
            Instruction::Or { dst, lhs, rhs } => {
                m.regs[usize::from(dst.0)] = m.reg(*lhs) | m.value(rhs)
            }
            Instruction::Add { dst, lhs, rhs } => {
                m.regs[usize::from(dst.0)] = m.reg(*lhs).wrapping_add(m.value(rhs))
            }
            Instruction::Cmp { dst, lhs, rhs } => {
                m.regs[usize::from(dst.0)] = u32::from(m.reg(*lhs) == m.value(rhs))
            }
            Instruction::Bz { cond, target } => {
                if m.reg(*cond) == 0 {
                    next = *target;
                }
            }
            Instruction::Bnz { cond, target } => {
                if m.reg(*cond) != 0 {
                    next = *target;
                }
            }
            Instruction::Jmp { target } => next = *target,
            Instruction::Load { dst, base, offset } => {
                let addr = m.value(base).wrapping_add(m.value(offset));
                match m.load(addr) {
                    Ok(b) => m.regs[usize::from(dst.0)] = u32::from(b),
                    Err(Fault) => break ExitReason::Crash,
                }
            }
            Instruction::Store { src, base, offset } => {
                let addr = m.value(base).wrapping_add(m.value(offset));
                if m.store(addr, m.reg(*src) as u8).is_err() {
                    break ExitReason::Crash;
                }
            }
            Instruction::Call { builtin, args } => {
                let (a, b) = (m.value(&args[0]), m.value(&args[1]));
                cmplog.on_call(program, &m.ram, pc, a, b, cursor);
                match m.call(*builtin, a, b) {
                    Ok(r) => m.regs[0] = r,
                    Err(Fault) => break ExitReason::Crash,
                }
            }
            Instruction::Crash => break ExitReason::Crash,
            Instruction::Halt => break ExitReason::Halt,
            Instruction::Label => {}
        }
        if program.is_leader(next) {
            edges.push((block, next as BlockId));
            block = next as BlockId;
        }
        pc = next;
    };

    edges.sort_unstable();
    edges.dedup();
    ExecutionTrace {
        edges,
        comparisons: cmplog.records,
        read_log,
        exit,
        exit_pc: pc,
        final_cursor: cursor,
        instructions_executed: executed,
        cmp_overflow: cmplog.overflow,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::parse_scenario;

    #[test]
    fn empty_input_exhausts_at_first_read() {
        let p = parse_scenario(".periph U\n.rom s \"a\\0\"\n.ram 1\n READ_REG r0, U\n HALT\n").unwrap();
        let t = execute(&p, b"", DEFAULT_BUDGET);
        assert_eq!(t.exit, ExitReason::InputExhausted);
        assert_eq!(t.edges, vec![(ENTRY_BLOCK, 0)]);
        assert_eq!(t.final_cursor, 0);
        assert!(t.read_log.is_empty());
    }

    #[test]
    fn budget_stops_infinite_loop() {
        let p = parse_scenario(".rom s \"a\\0\"\n.ram 1\nspin:\n JMP spin\n").unwrap();
        let t = execute(&p, b"", 1000);
        assert_eq!(t.exit, ExitReason::BudgetExhausted);
        assert_eq!(t.instructions_executed, 1000);
        assert!(t.edges.contains(&(0, 0)));
    }

    #[test]
    fn wild_register_store_crashes() {
        let src = ".rom s \"a\\0\"\n.ram 1\n LOADI r1, 0x08000000\n STORE r0, r1\n HALT\n";
        let p = parse_scenario(src).unwrap();
        let t = execute(&p, b"", DEFAULT_BUDGET);
        assert_eq!(t.exit, ExitReason::Crash);
        assert_eq!(t.exit_pc, 1);
        // ROM untouched.
        assert_eq!(p.rom(), b"a\0");
    }

    #[test]
    fn builtins() {
        let src = r#"
.rom ok "OK\0"
.rom okx "OKX\0"
.ram 8
    LOADI r1, 'x'
    STORE r1, @ram
    LOADI r1, 'O'
    STORE r1, @ram+1
    LOADI r1, 'K'
    STORE r1, @ram+2
    CALL STRSTR, @ram, @ok
    MOV r5, r0
    CALL STRCMP, @ram+1, @ok
    MOV r6, r0
    CALL STRCMP, @ram+1, @okx
    MOV r7, r0
    LOADI r2, 2
    CALL STRNCMP, @ram+1, @okx
    MOV r8, r0
    LOADI r2, 3
    CALL MEMCMP, @ram+1, @okx
    MOV r9, r0
    HALT
"#;
        let p = parse_scenario(src).unwrap();
        let mut m = Machine {
            program: &p,
            regs: [0; NUM_REGS],
            ram: vec![0; 8],
        };
        m.ram[..3].copy_from_slice(b"xOK");
        assert_eq!(m.call(Builtin::Strstr, RAM_BASE, ROM_BASE).ok(), Some(RAM_BASE + 1));
        assert_eq!(m.call(Builtin::Strcmp, RAM_BASE + 1, ROM_BASE).ok(), Some(0));
        assert_eq!(m.call(Builtin::Strcmp, RAM_BASE + 1, ROM_BASE + 3).ok(), Some(1));
        m.regs[2] = 2;
        assert_eq!(m.call(Builtin::Strncmp, RAM_BASE + 1, ROM_BASE + 3).ok(), Some(0));
        m.regs[2] = 3;
        assert_eq!(m.call(Builtin::Memcmp, RAM_BASE + 1, ROM_BASE + 3).ok(), Some(1));
        let t = execute(&p, b"", DEFAULT_BUDGET);
        assert_eq!(t.exit, ExitReason::Halt);
        // STRSTR, STRCMP, STRCMP, STRNCMP, MEMCMP all see ROM/RAM pointers.
        assert_eq!(t.comparisons.len(), 5);
    }
}
