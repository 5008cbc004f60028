//! Scenario assembly text format.
//!
//! ```text
//! ; comment
//! .periph UART_SR
//! .rom ok_str "OK\0"
//! .ram 64
//! poll:
//!     READ_REG r0, UART_SR
//!     AND r1, r0, 1
//!     BZ r1, poll
//!     CALL STRCMP, @ram, @ok_str
//! ```
//!
//! Immediates are decimal, `0x` hex, `0b` binary or C-style character
//! literals. `@sym+N` is the address of ROM symbol `sym` plus `N`; the
//! reserved symbol `@ram` is the base of RAM.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write as _};

use super::program::{
    Builtin, Instruction, Opcode, PeriphId, ProgramError, Reg, RomSymbol, Segment, Src,
    TargetProgram, NUM_REGS, RAM_BASE, ROM_BASE,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseError {
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    UnknownLabel {
        line: usize,
        name: String,
    },
    DuplicateLabel {
        line: usize,
        name: String,
    },
    Program(ProgramError),
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::Syntax {
                line,
                column,
                message,
            } => write!(f, "{line}:{column}: {message}"),
            ParseError::UnknownLabel { line, name } => write!(f, "{line}: unknown label `{name}`"),
            ParseError::DuplicateLabel { line, name } => {
                write!(f, "{line}: duplicate label `{name}`")
            }
            ParseError::Program(e) => write!(f, "malformed program: {e}"),
        }
    }
}

impl core::error::Error for ParseError {}

impl From<ProgramError> for ParseError {
    fn from(e: ProgramError) -> Self {
        ParseError::Program(e)
    }
}

#[derive(Clone, Copy)]
struct Tok<'a> {
    text: &'a str,
    column: usize,
}

/// Operand before symbol resolution.
enum RawOperand<'a> {
    Reg(Reg),
    Imm(u32),
    Addr { symbol: &'a str, offset: u32 },
    Ident(&'a str),
}

enum Pending<'a> {
    Ready(Instruction),
    Branch {
        op: Opcode,
        cond: Option<Reg>,
        label: &'a str,
    },
}

struct Parser<'a> {
    line: usize,
    rom: Vec<u8>,
    rom_symbols: Vec<RomSymbol>,
    ram_size: Option<u32>,
    peripherals: Vec<String>,
    labels: BTreeMap<String, usize>,
    pending: Vec<(usize, Tok<'a>, Pending<'a>)>,
    operands: Vec<(Tok<'a>, RawOperand<'a>)>,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

/// Strip a trailing `;` comment, honoring string and char literals.
fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    let mut quote: Option<u8> = None;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match quote {
            Some(q) => {
                if b == b'\\' {
                    i += 1;
                } else if b == q {
                    quote = None;
                }
            }
            None => match b {
                b'"' | b'\'' => quote = Some(b),
                b';' => return &line[..i],
                _ => {}
            },
        }
        i += 1;
    }
    line
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// Decode a C-style escaped string body (without the quotes).
pub fn unescape(body: &str) -> Result<Vec<u8>, String> {
    let bytes = body.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b != b'\\' {
            out.push(b);
            i += 1;
            continue;
        }
        let Some(&e) = bytes.get(i + 1) else {
            return Err("dangling backslash".to_string());
        };
        i += 2;
        out.push(match e {
            b'n' => b'\n',
            b'r' => b'\r',
            b't' => b'\t',
            b'0' => 0,
            b'\\' => b'\\',
            b'"' => b'"',
            b'\'' => b'\'',
            b'x' => {
                let hex = body
                    .get(i..i + 2)
                    .ok_or_else(|| "truncated \\x escape".to_string())?;
                i += 2;
                u8::from_str_radix(hex, 16).map_err(|_| format!("bad \\x escape `{hex}`"))?
            }
            other => return Err(format!("unknown escape `\\{}`", other as char)),
        });
    }
    Ok(out)
}

/// Encode bytes as a C-style escaped string body. Inverse of [`unescape`].
pub fn escape(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len());
    for &b in bytes {
        match b {
            b'\n' => s.push_str("\\n"),
            b'\r' => s.push_str("\\r"),
            b'\t' => s.push_str("\\t"),
            0 => s.push_str("\\0"),
            b'\\' => s.push_str("\\\\"),
            b'"' => s.push_str("\\\""),
            0x20..=0x7e => s.push(b as char),
            _ => {
                let _ = write!(s, "\\x{b:02x}");
            }
        }
    }
    s
}

fn parse_number(text: &str) -> Option<u32> {
    if let Some(hex) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        u32::from_str_radix(hex, 16).ok()
    } else if let Some(bin) = text.strip_prefix("0b") {
        u32::from_str_radix(bin, 2).ok()
    } else if text.len() >= 3 && text.starts_with('\'') && text.ends_with('\'') {
        let body = unescape(&text[1..text.len() - 1]).ok()?;
        match body.as_slice() {
            [b] => Some(u32::from(*b)),
            _ => None,
        }
    } else {
        text.parse().ok()
    }
}

fn parse_reg(text: &str) -> Option<Reg> {
    let digits = text.strip_prefix('r').or_else(|| text.strip_prefix('R'))?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let n: usize = digits.parse().ok()?;
    (n < NUM_REGS).then_some(Reg(n as u8))
}

/// Split an operand list on commas that are not inside a char literal.
fn split_operands<'a>(rest: &'a str, base_col: usize) -> Vec<Tok<'a>> {
    let mut toks = Vec::new();
    let bytes = rest.as_bytes();
    let mut start = 0;
    let mut in_char = false;
    let mut i = 0;
    let push = |s: usize, e: usize, toks: &mut Vec<Tok<'a>>| {
        let raw = &rest[s..e];
        let lead = raw.len() - raw.trim_start().len();
        toks.push(Tok {
            text: raw.trim(),
            column: base_col + s + lead,
        });
    };
    while i < bytes.len() {
        match bytes[i] {
            b'\\' if in_char => i += 1,
            b'\'' => in_char = !in_char,
            b',' if !in_char => {
                push(start, i, &mut toks);
                start = i + 1;
            }
            _ => {}
        }
        i += 1;
    }
    if !rest[start..].trim().is_empty() || !toks.is_empty() {
        push(start, rest.len(), &mut toks);
    }
    toks
}

impl<'a> Parser<'a> {
    fn new() -> Self {
        Self {
            line: 0,
            rom: Vec::new(),
            rom_symbols: Vec::new(),
            ram_size: None,
            peripherals: Vec::new(),
            labels: BTreeMap::new(),
            pending: Vec::new(),
            operands: Vec::new(),
        }
    }

    fn err(&self, column: usize, message: impl Into<String>) -> ParseError {
        syntax(self.line, column, message)
    }

    fn directive(&mut self, text: &'a str, column: usize) -> Result<(), ParseError> {
        let (name, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
        let rest_col = column + name.len() + (rest.len() - rest.trim_start().len()) + 1;
        let rest = rest.trim();
        match name {
            ".rom" => {
                let (sym, lit) = rest
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| self.err(rest_col, "expected `.rom <name> \"<bytes>\"`"))?;
                let lit = lit.trim();
                if !is_ident(sym) || sym == "ram" {
                    return Err(self.err(rest_col, format!("bad ROM symbol name `{sym}`")));
                }
                if self.rom_symbols.iter().any(|s| s.name == sym) {
                    return Err(self.err(rest_col, format!("duplicate ROM symbol `{sym}`")));
                }
                if lit.len() < 2 || !lit.starts_with('"') || !lit.ends_with('"') {
                    return Err(self.err(rest_col, "expected quoted string literal"));
                }
                let bytes = unescape(&lit[1..lit.len() - 1]).map_err(|m| self.err(rest_col, m))?;
                if bytes.is_empty() {
                    return Err(self.err(rest_col, "empty ROM literal"));
                }
                self.rom_symbols.push(RomSymbol {
                    name: sym.to_string(),
                    offset: self.rom.len() as u32,
                    len: bytes.len() as u32,
                });
                self.rom.extend_from_slice(&bytes);
            }
            ".ram" => {
                if self.ram_size.is_some() {
                    return Err(self.err(column, "duplicate `.ram` directive"));
                }
                let size = parse_number(rest)
                    .filter(|&n| n > 0)
                    .ok_or_else(|| self.err(rest_col, "expected positive RAM size"))?;
                self.ram_size = Some(size);
            }
            ".periph" => {
                if rest.is_empty() {
                    return Err(self.err(rest_col, "expected peripheral name"));
                }
                for p in rest.split_whitespace() {
                    if !is_ident(p) {
                        return Err(self.err(rest_col, format!("bad peripheral name `{p}`")));
                    }
                    if self.peripherals.iter().any(|q| q == p) {
                        return Err(self.err(rest_col, format!("duplicate peripheral `{p}`")));
                    }
                    self.peripherals.push(p.to_string());
                }
            }
            other => return Err(self.err(column, format!("unknown directive `{other}`"))),
        }
        Ok(())
    }

    fn operand(&self, tok: Tok<'a>) -> Result<RawOperand<'a>, ParseError> {
        let t = tok.text;
        if t.is_empty() {
            return Err(self.err(tok.column, "empty operand"));
        }
        if let Some(r) = parse_reg(t) {
            return Ok(RawOperand::Reg(r));
        }
        if let Some(addr) = t.strip_prefix('@') {
            let (symbol, offset) = match addr.split_once('+') {
                Some((s, off)) => (
                    s.trim(),
                    parse_number(off.trim())
                        .ok_or_else(|| self.err(tok.column, format!("bad offset in `{t}`")))?,
                ),
                None => (addr, 0),
            };
            if !is_ident(symbol) {
                return Err(self.err(tok.column, format!("bad address `{t}`")));
            }
            return Ok(RawOperand::Addr { symbol, offset });
        }
        if let Some(n) = parse_number(t) {
            return Ok(RawOperand::Imm(n));
        }
        if is_ident(t) {
            return Ok(RawOperand::Ident(t));
        }
        Err(self.err(tok.column, format!("cannot parse operand `{t}`")))
    }

    fn resolve_addr(&self, tok: Tok<'_>, symbol: &str, offset: u32) -> Result<u32, ParseError> {
        if symbol == "ram" {
            return Ok(RAM_BASE.wrapping_add(offset));
        }
        let sym = self
            .rom_symbols
            .iter()
            .find(|s| s.name == symbol)
            .ok_or_else(|| self.err(tok.column, format!("unknown ROM symbol `{symbol}`")))?;
        Ok(ROM_BASE + sym.offset + offset)
    }

    fn reg_at(&self, idx: usize) -> Result<Reg, ParseError> {
        match &self.operands[idx] {
            (_, RawOperand::Reg(r)) => Ok(*r),
            (tok, _) => Err(self.err(tok.column, format!("expected register, got `{}`", tok.text))),
        }
    }

    fn src_at(&self, idx: usize) -> Result<Src, ParseError> {
        match &self.operands[idx] {
            (_, RawOperand::Reg(r)) => Ok(Src::Reg(*r)),
            (_, RawOperand::Imm(n)) => Ok(Src::Imm(*n)),
            (tok, RawOperand::Addr { symbol, offset }) => {
                Ok(Src::Imm(self.resolve_addr(*tok, symbol, *offset)?))
            }
            (tok, RawOperand::Ident(_)) => {
                Err(self.err(tok.column, format!("expected value, got `{}`", tok.text)))
            }
        }
    }

    fn ident_at(&self, idx: usize) -> Result<&'a str, ParseError> {
        match &self.operands[idx] {
            (_, RawOperand::Ident(s)) => Ok(s),
            (tok, _) => Err(self.err(tok.column, format!("expected name, got `{}`", tok.text))),
        }
    }

    fn instruction(&mut self, text: &'a str, column: usize) -> Result<(), ParseError> {
        let (mnemonic, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
        let op = Opcode::from_mnemonic(mnemonic)
            .filter(|op| *op != Opcode::Label)
            .ok_or_else(|| self.err(column, format!("unknown mnemonic `{mnemonic}`")))?;
        let rest_col = column + mnemonic.len() + 1;
        let toks = split_operands(rest, rest_col);
        self.operands.clear();
        for tok in &toks {
            let raw = self.operand(*tok)?;
            self.operands.push((*tok, raw));
        }
        let arity = match op {
            Opcode::Crash | Opcode::Halt => [0, 0],
            Opcode::Jmp => [1, 1],
            Opcode::ReadReg | Opcode::LoadI | Opcode::Mov | Opcode::Bz | Opcode::Bnz => [2, 2],
            Opcode::Load | Opcode::Store => [2, 3],
            Opcode::And | Opcode::Or | Opcode::Add | Opcode::Cmp | Opcode::Call => [3, 3],
            Opcode::Label => unreachable!(),
        };
        let n = self.operands.len();
        if n < arity[0] || n > arity[1] {
            return Err(self.err(
                column,
                format!("`{}` takes {} operand(s), got {n}", op.mnemonic(), arity[0]),
            ));
        }
        let tok = Tok {
            text: mnemonic,
            column,
        };
        let insn = match op {
            Opcode::ReadReg => {
                let dst = self.reg_at(0)?;
                let name = self.ident_at(1)?;
                let periph = self
                    .peripherals
                    .iter()
                    .position(|p| p == name)
                    .ok_or_else(|| {
                        self.err(self.operands[1].0.column, format!("undeclared peripheral `{name}`"))
                    })?;
                Instruction::ReadReg {
                    dst,
                    periph: PeriphId(periph as u16),
                }
            }
            Opcode::LoadI => {
                let dst = self.reg_at(0)?;
                let value = match self.src_at(1)? {
                    Src::Imm(v) => v,
                    Src::Reg(_) => {
                        return Err(self.err(self.operands[1].0.column, "LOADI needs an immediate"))
                    }
                };
                Instruction::LoadI { dst, value }
            }
            Opcode::Mov => Instruction::Mov {
                dst: self.reg_at(0)?,
                src: self.reg_at(1)?,
            },
            Opcode::And | Opcode::Or | Opcode::Add | Opcode::Cmp => {
                let (dst, lhs, rhs) = (self.reg_at(0)?, self.reg_at(1)?, self.src_at(2)?);
                match op {
                    Opcode::And => Instruction::And { dst, lhs, rhs },
                    Opcode::Or => Instruction::Or { dst, lhs, rhs },
                    Opcode::Add => Instruction::Add { dst, lhs, rhs },
                    _ => Instruction::Cmp { dst, lhs, rhs },
                }
            }
            Opcode::Bz | Opcode::Bnz => {
                let cond = self.reg_at(0)?;
                let label = self.ident_at(1)?;
                self.pending.push((
                    self.line,
                    tok,
                    Pending::Branch {
                        op,
                        cond: Some(cond),
                        label,
                    },
                ));
                return Ok(());
            }
            Opcode::Jmp => {
                let label = self.ident_at(0)?;
                self.pending.push((
                    self.line,
                    tok,
                    Pending::Branch {
                        op,
                        cond: None,
                        label,
                    },
                ));
                return Ok(());
            }
            Opcode::Load | Opcode::Store => {
                let r = self.reg_at(0)?;
                let base = self.src_at(1)?;
                let offset = if n == 3 { self.src_at(2)? } else { Src::Imm(0) };
                if op == Opcode::Load {
                    Instruction::Load {
                        dst: r,
                        base,
                        offset,
                    }
                } else {
                    Instruction::Store {
                        src: r,
                        base,
                        offset,
                    }
                }
            }
            Opcode::Call => {
                let name = self.ident_at(0)?;
                let builtin = Builtin::from_name(name).ok_or_else(|| {
                    self.err(self.operands[0].0.column, format!("unknown builtin `{name}`"))
                })?;
                Instruction::Call {
                    builtin,
                    args: [self.src_at(1)?, self.src_at(2)?],
                }
            }
            Opcode::Crash => Instruction::Crash,
            Opcode::Halt => Instruction::Halt,
            Opcode::Label => unreachable!(),
        };
        self.pending.push((self.line, tok, Pending::Ready(insn)));
        Ok(())
    }

    fn line(&mut self, raw: &'a str) -> Result<(), ParseError> {
        let content = strip_comment(raw);
        let mut text = content.trim_start();
        let mut column = content.len() - text.len() + 1;
        text = text.trim_end();
        if text.is_empty() {
            return Ok(());
        }
        if text.starts_with('.') {
            return self.directive(text, column);
        }
        if let Some((label, rest)) = text.split_once(':') {
            let label = label.trim_end();
            if is_ident(label) && !label.contains(char::is_whitespace) {
                if self.labels.contains_key(label) {
                    return Err(ParseError::DuplicateLabel {
                        line: self.line,
                        name: label.to_string(),
                    });
                }
                self.labels.insert(label.to_string(), self.pending.len());
                self.pending.push((
                    self.line,
                    Tok {
                        text: label,
                        column,
                    },
                    Pending::Ready(Instruction::Label),
                ));
                let after = rest.trim_start();
                column += text.len() - after.len();
                text = after;
                if text.is_empty() {
                    return Ok(());
                }
            }
        }
        self.instruction(text, column)
    }

    fn finish(self) -> Result<TargetProgram, ParseError> {
        let mut instructions = Vec::with_capacity(self.pending.len());
        for (line, _tok, p) in self.pending {
            instructions.push(match p {
                Pending::Ready(insn) => insn,
                Pending::Branch { op, cond, label } => {
                    let target =
                        *self
                            .labels
                            .get(label)
                            .ok_or_else(|| ParseError::UnknownLabel {
                                line,
                                name: label.to_string(),
                            })?;
                    match (op, cond) {
                        (Opcode::Bz, Some(cond)) => Instruction::Bz { cond, target },
                        (Opcode::Bnz, Some(cond)) => Instruction::Bnz { cond, target },
                        _ => Instruction::Jmp { target },
                    }
                }
            });
        }
        Ok(TargetProgram::new(
            instructions,
            self.labels,
            self.rom,
            self.rom_symbols,
            self.ram_size.unwrap_or(0),
            self.peripherals,
        )?)
    }
}

/// Parse scenario assembly into a validated program.
pub fn parse_scenario(text: &str) -> Result<TargetProgram, ParseError> {
    let mut parser = Parser::new();
    for (i, raw) in text.lines().enumerate() {
        parser.line = i + 1;
        parser.line(raw)?;
    }
    parser.finish()
}

fn fmt_src(program: &TargetProgram, src: &Src, out: &mut String) {
    match src {
        Src::Reg(r) => {
            let _ = write!(out, "r{}", r.0);
        }
        Src::Imm(v) => fmt_imm(program, *v, out),
    }
}

fn fmt_imm(program: &TargetProgram, v: u32, out: &mut String) {
    match program.segment_of(v) {
        Some(Segment::Rom) => {
            let off = v - ROM_BASE;
            // Prefer the symbol that contains the address.
            if let Some(sym) = program
                .rom_symbols()
                .iter()
                .find(|s| off >= s.offset && off < s.offset + s.len)
            {
                let _ = write!(out, "@{}", sym.name);
                if off > sym.offset {
                    let _ = write!(out, "+{}", off - sym.offset);
                }
                return;
            }
            let _ = write!(out, "{v:#x}");
        }
        Some(Segment::Ram) => {
            out.push_str("@ram");
            if v > RAM_BASE {
                let _ = write!(out, "+{}", v - RAM_BASE);
            }
        }
        None => {
            let _ = write!(out, "{v}");
        }
    }
}

/// Render a program back to scenario assembly. Parsing the output yields
/// an equal program.
pub fn serialize(program: &TargetProgram) -> String {
    let mut out = String::new();
    for p in program.peripherals() {
        let _ = writeln!(out, ".periph {p}");
    }
    for sym in program.rom_symbols() {
        let bytes = &program.rom()[sym.offset as usize..(sym.offset + sym.len) as usize];
        let _ = writeln!(out, ".rom {} \"{}\"", sym.name, escape(bytes));
    }
    let _ = writeln!(out, ".ram {}", program.ram_size());
    let label_name = |idx: usize| program.label_at(idx).unwrap_or("?");
    for (i, insn) in program.instructions().iter().enumerate() {
        if let Instruction::Label = insn {
            let _ = writeln!(out, "{}:", label_name(i));
            continue;
        }
        out.push_str("    ");
        out.push_str(insn.opcode().mnemonic());
        match insn {
            Instruction::ReadReg { dst, periph } => {
                let _ = write!(
                    out,
                    " r{}, {}",
                    dst.0,
                    program.peripherals()[usize::from(periph.0)]
                );
            }
            Instruction::LoadI { dst, value } => {
                let _ = write!(out, " r{}, ", dst.0);
                fmt_imm(program, *value, &mut out);
            }
            Instruction::Mov { dst, src } => {
                let _ = write!(out, " r{}, r{}", dst.0, src.0);
            }
            Instruction::And { dst, lhs, rhs }
            | Instruction::Or { dst, lhs, rhs }
            | Instruction::Add { dst, lhs, rhs }
            | Instruction::Cmp { dst, lhs, rhs } => {
                let _ = write!(out, " r{}, r{}, ", dst.0, lhs.0);
                fmt_src(program, rhs, &mut out);
            }
            Instruction::Bz { cond, target } | Instruction::Bnz { cond, target } => {
                let _ = write!(out, " r{}, {}", cond.0, label_name(*target));
            }
            Instruction::Jmp { target } => {
                let _ = write!(out, " {}", label_name(*target));
            }
            Instruction::Load {
                dst: r,
                base,
                offset,
            }
            | Instruction::Store {
                src: r,
                base,
                offset,
            } => {
                let _ = write!(out, " r{}, ", r.0);
                fmt_src(program, base, &mut out);
                out.push_str(", ");
                fmt_src(program, offset, &mut out);
            }
            Instruction::Call { builtin, args } => {
                let _ = write!(out, " {}, ", builtin.name());
                fmt_src(program, &args[0], &mut out);
                out.push_str(", ");
                fmt_src(program, &args[1], &mut out);
            }
            Instruction::Crash | Instruction::Halt | Instruction::Label => {}
        }
        out.push('\n');
    }
    out
}
