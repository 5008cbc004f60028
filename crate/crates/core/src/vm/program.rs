use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Base address of the read-only segment.
pub const ROM_BASE: u32 = 0x0800_0000;
/// Base address of the writable segment.
pub const RAM_BASE: u32 = 0x2000_0000;
/// Number of general purpose VM registers.
pub const NUM_REGS: usize = 16;

/// A VM register, `r0` through `r15`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reg(pub u8);

/// Index into the program's declared peripheral list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeriphId(pub u16);

/// A value operand: register contents or an immediate word.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Src {
    Reg(Reg),
    Imm(u32),
}

/// Native routines reachable through `CALL`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Builtin {
    Strcmp,
    Strncmp,
    Strstr,
    Memcmp,
    Print,
}

impl Builtin {
    pub const ALL: [Builtin; 5] = [
        Builtin::Strcmp,
        Builtin::Strncmp,
        Builtin::Strstr,
        Builtin::Memcmp,
        Builtin::Print,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Strcmp => "STRCMP",
            Builtin::Strncmp => "STRNCMP",
            Builtin::Strstr => "STRSTR",
            Builtin::Memcmp => "MEMCMP",
            Builtin::Print => "PRINT",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|b| b.name().eq_ignore_ascii_case(name))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Opcode {
    ReadReg,
    LoadI,
    Mov,
    And,
    Or,
    Add,
    Cmp,
    Bz,
    Bnz,
    Jmp,
    Load,
    Store,
    Call,
    Crash,
    Halt,
    Label,
}

impl Opcode {
    pub const ALL: [Opcode; 16] = [
        Opcode::ReadReg,
        Opcode::LoadI,
        Opcode::Mov,
        Opcode::And,
        Opcode::Or,
        Opcode::Add,
        Opcode::Cmp,
        Opcode::Bz,
        Opcode::Bnz,
        Opcode::Jmp,
        Opcode::Load,
        Opcode::Store,
        Opcode::Call,
        Opcode::Crash,
        Opcode::Halt,
        Opcode::Label,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::ReadReg => "READ_REG",
            Opcode::LoadI => "LOADI",
            Opcode::Mov => "MOV",
            Opcode::And => "AND",
            Opcode::Or => "OR",
            Opcode::Add => "ADD",
            Opcode::Cmp => "CMP",
            Opcode::Bz => "BZ",
            Opcode::Bnz => "BNZ",
            Opcode::Jmp => "JMP",
            Opcode::Load => "LOAD",
            Opcode::Store => "STORE",
            Opcode::Call => "CALL",
            Opcode::Crash => "CRASH",
            Opcode::Halt => "HALT",
            Opcode::Label => "LABEL",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|op| op.mnemonic().eq_ignore_ascii_case(s))
    }
}

/// One VM instruction. Branch targets are instruction indices of `Label`s.
///
/// `CMP dst, lhs, rhs` writes 1 to `dst` when the operands are equal and 0
/// otherwise. `LOAD`/`STORE` move a single byte at `base + offset`. `CALL`
/// passes two candidate pointer arguments; length-taking builtins read their
/// length from `r2` and every builtin returns its result in `r0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Instruction {
    ReadReg { dst: Reg, periph: PeriphId },
    LoadI { dst: Reg, value: u32 },
    Mov { dst: Reg, src: Reg },
    And { dst: Reg, lhs: Reg, rhs: Src },
    Or { dst: Reg, lhs: Reg, rhs: Src },
    Add { dst: Reg, lhs: Reg, rhs: Src },
    Cmp { dst: Reg, lhs: Reg, rhs: Src },
    Bz { cond: Reg, target: usize },
    Bnz { cond: Reg, target: usize },
    Jmp { target: usize },
    Load { dst: Reg, base: Src, offset: Src },
    Store { src: Reg, base: Src, offset: Src },
    Call { builtin: Builtin, args: [Src; 2] },
    Crash,
    Halt,
    Label,
}

impl Instruction {
    pub fn opcode(&self) -> Opcode {
        match self {
            Instruction::ReadReg { .. } => Opcode::ReadReg,
            Instruction::LoadI { .. } => Opcode::LoadI,
            Instruction::Mov { .. } => Opcode::Mov,
            Instruction::And { .. } => Opcode::And,
            Instruction::Or { .. } => Opcode::Or,
            Instruction::Add { .. } => Opcode::Add,
            Instruction::Cmp { .. } => Opcode::Cmp,
            Instruction::Bz { .. } => Opcode::Bz,
            Instruction::Bnz { .. } => Opcode::Bnz,
            Instruction::Jmp { .. } => Opcode::Jmp,
            Instruction::Load { .. } => Opcode::Load,
            Instruction::Store { .. } => Opcode::Store,
            Instruction::Call { .. } => Opcode::Call,
            Instruction::Crash => Opcode::Crash,
            Instruction::Halt => Opcode::Halt,
            Instruction::Label => Opcode::Label,
        }
    }

    pub fn branch_target(&self) -> Option<usize> {
        match self {
            Instruction::Bz { target, .. }
            | Instruction::Bnz { target, .. }
            | Instruction::Jmp { target } => Some(*target),
            _ => None,
        }
    }

    fn registers(&self) -> impl Iterator<Item = Reg> + '_ {
        let mut regs: [Option<Reg>; 3] = [None; 3];
        let src = |s: &Src| match s {
            Src::Reg(r) => Some(*r),
            Src::Imm(_) => None,
        };
        match self {
            Instruction::ReadReg { dst, .. } | Instruction::LoadI { dst, .. } => {
                regs[0] = Some(*dst)
            }
            Instruction::Mov { dst, src: s } => {
                regs[0] = Some(*dst);
                regs[1] = Some(*s);
            }
            Instruction::And { dst, lhs, rhs }
            | Instruction::Or { dst, lhs, rhs }
            | Instruction::Add { dst, lhs, rhs }
            | Instruction::Cmp { dst, lhs, rhs } => {
                regs = [Some(*dst), Some(*lhs), src(rhs)];
            }
            Instruction::Bz { cond, .. } | Instruction::Bnz { cond, .. } => regs[0] = Some(*cond),
            Instruction::Load {
                dst: r,
                base,
                offset,
            }
            | Instruction::Store {
                src: r,
                base,
                offset,
            } => regs = [Some(*r), src(base), src(offset)],
            Instruction::Call { args, .. } => {
                regs[0] = src(&args[0]);
                regs[1] = src(&args[1]);
            }
            _ => {}
        }
        regs.into_iter().flatten()
    }
}

/// A named string or blob in ROM.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RomSymbol {
    pub name: String,
    pub offset: u32,
    pub len: u32,
}

/// Memory segment an address falls in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Segment {
    Rom,
    Ram,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProgramError {
    EmptyRom,
    EmptyRam,
    EmptyProgram,
    BadBranchTarget { at: usize, target: usize },
    UnknownPeripheral { at: usize, periph: u16 },
    BadRegister { at: usize, reg: u8 },
    /// An immediate pointer operand lies outside both ROM and RAM.
    WildPointer { at: usize, addr: u32 },
    /// A `STORE` with a statically known address targets ROM.
    RomWrite { at: usize, addr: u32 },
    LabelMismatch { name: String },
}

impl fmt::Display for ProgramError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProgramError::EmptyRom => write!(f, "program declares no ROM data"),
            ProgramError::EmptyRam => write!(f, "program declares no RAM"),
            ProgramError::EmptyProgram => write!(f, "program has no instructions"),
            ProgramError::BadBranchTarget { at, target } => {
                write!(f, "instruction {at}: branch target {target} is not a label")
            }
            ProgramError::UnknownPeripheral { at, periph } => {
                write!(f, "instruction {at}: undeclared peripheral {periph}")
            }
            ProgramError::BadRegister { at, reg } => {
                write!(f, "instruction {at}: register r{reg} out of range")
            }
            ProgramError::WildPointer { at, addr } => {
                write!(f, "instruction {at}: pointer {addr:#010x} is neither ROM nor RAM")
            }
            ProgramError::RomWrite { at, addr } => {
                write!(f, "instruction {at}: store targets ROM address {addr:#010x}")
            }
            ProgramError::LabelMismatch { name } => {
                write!(f, "label {name} does not point at a LABEL instruction")
            }
        }
    }
}

impl core::error::Error for ProgramError {}

/// A validated, immutable scenario program.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetProgram {
    instructions: Vec<Instruction>,
    labels: BTreeMap<String, usize>,
    rom: Vec<u8>,
    rom_symbols: Vec<RomSymbol>,
    ram_size: u32,
    peripherals: Vec<String>,
    leaders: Vec<bool>,
}

impl TargetProgram {
    pub fn new(
        instructions: Vec<Instruction>,
        labels: BTreeMap<String, usize>,
        rom: Vec<u8>,
        rom_symbols: Vec<RomSymbol>,
        ram_size: u32,
        peripherals: Vec<String>,
    ) -> Result<Self, ProgramError> {
        let mut program = Self {
            instructions,
            labels,
            rom,
            rom_symbols,
            ram_size,
            peripherals,
            leaders: Vec::new(),
        };
        program.validate()?;
        program.leaders = program.compute_leaders();
        Ok(program)
    }

    fn validate(&self) -> Result<(), ProgramError> {
        if self.instructions.is_empty() {
            return Err(ProgramError::EmptyProgram);
        }
        if self.rom.is_empty() {
            return Err(ProgramError::EmptyRom);
        }
        if self.ram_size == 0 {
            return Err(ProgramError::EmptyRam);
        }
        for (name, &idx) in &self.labels {
            if self.instructions.get(idx) != Some(&Instruction::Label) {
                return Err(ProgramError::LabelMismatch { name: name.clone() });
            }
        }
        for (at, insn) in self.instructions.iter().enumerate() {
            for reg in insn.registers() {
                if usize::from(reg.0) >= NUM_REGS {
                    return Err(ProgramError::BadRegister { at, reg: reg.0 });
                }
            }
            if let Some(target) = insn.branch_target() {
                if self.instructions.get(target) != Some(&Instruction::Label) {
                    return Err(ProgramError::BadBranchTarget { at, target });
                }
            }
            match insn {
                Instruction::ReadReg { periph, .. } => {
                    if usize::from(periph.0) >= self.peripherals.len() {
                        return Err(ProgramError::UnknownPeripheral { at, periph: periph.0 });
                    }
                }
                Instruction::Load { base, offset, .. } => {
                    self.check_static_pointer(at, base, offset, false)?
                }
                Instruction::Store { base, offset, .. } => {
                    self.check_static_pointer(at, base, offset, true)?
                }
                Instruction::Call { args, .. } => {
                    for arg in args {
                        if let Src::Imm(addr) = arg {
                            if self.segment_of(*addr).is_none() {
                                return Err(ProgramError::WildPointer { at, addr: *addr });
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn check_static_pointer(
        &self,
        at: usize,
        base: &Src,
        offset: &Src,
        is_store: bool,
    ) -> Result<(), ProgramError> {
        // A pointer is statically known when the base is immediate. A register
        // offset on top of an immediate base still pins the segment.
        let Src::Imm(base_addr) = *base else {
            return Ok(());
        };
        let addr = match offset {
            Src::Imm(off) => base_addr.wrapping_add(*off),
            Src::Reg(_) => base_addr,
        };
        match self.segment_of(addr) {
            None => Err(ProgramError::WildPointer { at, addr }),
            Some(Segment::Rom) if is_store => Err(ProgramError::RomWrite { at, addr }),
            Some(_) => Ok(()),
        }
    }

    fn compute_leaders(&self) -> Vec<bool> {
        let n = self.instructions.len();
        let mut leaders = alloc::vec![false; n];
        leaders[0] = true;
        for (i, insn) in self.instructions.iter().enumerate() {
            match insn {
                Instruction::Label => leaders[i] = true,
                Instruction::Bz { .. } | Instruction::Bnz { .. } | Instruction::Jmp { .. } if i + 1 < n => {
                    leaders[i + 1] = true;
                }
                _ => {}
            }
        }
        leaders
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    /// Label name to instruction index.
    pub fn labels(&self) -> &BTreeMap<String, usize> {
        &self.labels
    }

    pub fn label_at(&self, index: usize) -> Option<&str> {
        self.labels
            .iter()
            .find(|(_, &i)| i == index)
            .map(|(name, _)| name.as_str())
    }

    /// The first non-label instruction at or after `label`. For a label
    /// placed right before a `CALL`, this is the comparison site id.
    pub fn site_of_label(&self, label: &str) -> Option<usize> {
        let start = *self.labels.get(label)?;
        (start..self.instructions.len()).find(|&i| self.instructions[i] != Instruction::Label)
    }

    pub fn rom(&self) -> &[u8] {
        &self.rom
    }

    pub fn rom_symbols(&self) -> &[RomSymbol] {
        &self.rom_symbols
    }

    pub fn rom_symbol(&self, name: &str) -> Option<&RomSymbol> {
        self.rom_symbols.iter().find(|s| s.name == name)
    }

    pub fn ram_size(&self) -> u32 {
        self.ram_size
    }

    pub fn peripherals(&self) -> &[String] {
        &self.peripherals
    }

    pub fn periph_id(&self, name: &str) -> Option<PeriphId> {
        self.peripherals
            .iter()
            .position(|p| p == name)
            .map(|i| PeriphId(i as u16))
    }

    /// Whether instruction `index` starts a basic block.
    pub fn is_leader(&self, index: usize) -> bool {
        self.leaders.get(index).copied().unwrap_or(false)
    }

    /// Block ids (leader instruction indices) in program order.
    pub fn blocks(&self) -> impl Iterator<Item = u32> + '_ {
        self.leaders
            .iter()
            .enumerate()
            .filter(|(_, &l)| l)
            .map(|(i, _)| i as u32)
    }

    pub fn segment_of(&self, addr: u32) -> Option<Segment> {
        if addr >= ROM_BASE && u64::from(addr) < u64::from(ROM_BASE) + self.rom.len() as u64 {
            Some(Segment::Rom)
        } else if addr >= RAM_BASE && u64::from(addr) < u64::from(RAM_BASE) + u64::from(self.ram_size)
        {
            Some(Segment::Ram)
        } else {
            None
        }
    }

    /// One past the last valid address of the segment containing `addr`.
    pub fn segment_end(&self, seg: Segment) -> u32 {
        match seg {
            Segment::Rom => ROM_BASE + self.rom.len() as u32,
            Segment::Ram => RAM_BASE + self.ram_size,
        }
    }

    /// Static control-flow edges, including the entry edge, as
    /// `(from_block, to_block)` pairs.
    pub fn static_edges(&self) -> Vec<(u32, u32)> {
        let mut edges = alloc::vec![(super::ENTRY_BLOCK, 0u32)];
        let mut block = 0u32;
        let n = self.instructions.len();
        for (i, insn) in self.instructions.iter().enumerate() {
            if self.leaders[i] {
                block = i as u32;
            }
            let mut push = |to: usize| {
                if to < n && self.leaders[to] {
                    edges.push((block, to as u32));
                }
            };
            match insn {
                Instruction::Jmp { target } => push(*target),
                Instruction::Bz { target, .. } | Instruction::Bnz { target, .. } => {
                    push(*target);
                    push(i + 1);
                }
                Instruction::Crash | Instruction::Halt => {}
                _ => push(i + 1),
            }
        }
        edges.sort_unstable();
        edges.dedup();
        edges
    }
}
