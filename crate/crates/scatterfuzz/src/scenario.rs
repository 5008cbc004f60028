//! Scenario files: target assembly plus `;@` metadata lines naming the
//! scenario category and the expected ideal string at each comparison label.
//!
//! ```text
//! ;@ category guard-loop
//! ;@ expect ok_cmp "OK"
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use scatterfuzz_core::cmplog::ComparisonRecord;
use scatterfuzz_core::vm::{
    parse_scenario, unescape, Builtin, Instruction, ParseError, Segment, Src, TargetProgram,
    ROM_BASE,
};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    GuardLoop,
    CommandConsole,
    Interleaved,
    Substring,
    Contraction,
    FalsePositive,
    NoStrings,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::GuardLoop,
        Category::CommandConsole,
        Category::Interleaved,
        Category::Substring,
        Category::Contraction,
        Category::FalsePositive,
        Category::NoStrings,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::GuardLoop => "guard-loop",
            Category::CommandConsole => "command-console",
            Category::Interleaved => "interleaved",
            Category::Substring => "substring",
            Category::Contraction => "contraction",
            Category::FalsePositive => "false-positive",
            Category::NoStrings => "no-strings",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

/// Ground truth for one comparison site.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpectedString {
    pub label: String,
    pub ideal: Vec<u8>,
    /// Instruction index of the comparison call.
    pub site: usize,
    pub builtin: Builtin,
}

impl ExpectedString {
    pub fn ideal_lossy(&self) -> String {
        String::from_utf8_lossy(&self.ideal).into_owned()
    }

    /// Whether a record at this site shows the comparison passing. Substring
    /// search passes when the ideal occurs anywhere in the observed string.
    pub fn satisfied_by(&self, rec: &ComparisonRecord) -> bool {
        if rec.cmp_id != self.site || rec.ideal_str() != self.ideal.as_slice() {
            return false;
        }
        let obs = rec.observed_str();
        match self.builtin {
            Builtin::Strstr => obs.windows(self.ideal.len().max(1)).any(|w| w == self.ideal.as_slice()),
            _ => obs == self.ideal.as_slice(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub category: Category,
    pub expected: Vec<ExpectedString>,
    pub source: String,
    pub program: TargetProgram,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{name}: {source}")]
    Parse {
        name: String,
        #[source]
        source: ParseError,
    },
    #[error("{name}, line {line}: {message}")]
    Metadata {
        name: String,
        line: usize,
        message: String,
    },
    #[error("{name}: {reason}")]
    Validation { name: String, reason: String },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

fn meta_err(name: &str, line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Metadata {
        name: name.to_string(),
        line,
        message: message.into(),
    }
}

fn invalid(name: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        name: name.to_string(),
        reason: reason.into(),
    }
}

/// Read the NUL-terminated ROM string at `addr`.
fn rom_string(program: &TargetProgram, addr: u32) -> Option<Vec<u8>> {
    if program.segment_of(addr) != Some(Segment::Rom) {
        return None;
    }
    let rest = &program.rom()[(addr - ROM_BASE) as usize..];
    let end = rest.iter().position(|&b| b == 0).unwrap_or(rest.len());
    Some(rest[..end].to_vec())
}

/// Comparison calls whose ROM-side argument is an immediate address.
fn static_comparisons(program: &TargetProgram) -> Vec<(usize, Builtin, Vec<u8>)> {
    let mut out = Vec::new();
    for (site, ins) in program.instructions().iter().enumerate() {
        let Instruction::Call { builtin, args } = ins else {
            continue;
        };
        let imm = |s: &Src| match s {
            Src::Imm(a) => Some(*a),
            Src::Reg(_) => None,
        };
        let (Some(a), Some(b)) = (imm(&args[0]), imm(&args[1])) else {
            continue;
        };
        let rom = match (program.segment_of(a), program.segment_of(b)) {
            (Some(Segment::Rom), Some(Segment::Ram)) => a,
            (Some(Segment::Ram), Some(Segment::Rom)) => b,
            _ => continue,
        };
        if let Some(s) = rom_string(program, rom) {
            out.push((site, *builtin, s));
        }
    }
    out
}

impl Scenario {
    pub fn parse(name: &str, source: &str) -> Result<Self, ScenarioError> {
        let mut category = None;
        let mut declared = Vec::new();
        for (n, line) in source.lines().enumerate() {
            let Some(meta) = line.trim_start().strip_prefix(";@") else {
                continue;
            };
            let meta = meta.trim();
            let (key, rest) = meta.split_once(char::is_whitespace).unwrap_or((meta, ""));
            let rest = rest.trim();
            match key {
                "category" => {
                    let c = rest.parse().map_err(|e: String| meta_err(name, n + 1, e))?;
                    if category.replace(c).is_some() {
                        return Err(meta_err(name, n + 1, "category given twice"));
                    }
                }
                "expect" => {
                    let (label, lit) = rest
                        .split_once(char::is_whitespace)
                        .ok_or_else(|| meta_err(name, n + 1, "expected `expect <label> \"<string>\"`"))?;
                    let lit = lit.trim();
                    let body = lit
                        .strip_prefix('"')
                        .and_then(|s| s.strip_suffix('"'))
                        .ok_or_else(|| meta_err(name, n + 1, "ideal string must be quoted"))?;
                    let ideal = unescape(body).map_err(|e| meta_err(name, n + 1, e))?;
                    declared.push((n + 1, label.to_string(), ideal));
                }
                other => return Err(meta_err(name, n + 1, format!("unknown metadata key `{other}`"))),
            }
        }
        let category = category.ok_or_else(|| meta_err(name, 0, "missing `;@ category` line"))?;
        let program = parse_scenario(source).map_err(|source| ScenarioError::Parse {
            name: name.to_string(),
            source,
        })?;

        let statics = static_comparisons(&program);
        let mut expected = Vec::new();
        for (line, label, ideal) in declared {
            let site = program
                .site_of_label(&label)
                .ok_or_else(|| meta_err(name, line, format!("no label `{label}`")))?;
            let Some((_, builtin, rom)) = statics.iter().find(|(s, _, _)| *s == site) else {
                return Err(invalid(name, format!("`{label}` is not a ROM/RAM comparison call")));
            };
            if *rom != ideal {
                return Err(invalid(
                    name,
                    format!(
                        "`{label}` compares against {:?}, metadata says {:?}",
                        String::from_utf8_lossy(rom),
                        String::from_utf8_lossy(&ideal)
                    ),
                ));
            }
            if *builtin == Builtin::Print {
                return Err(invalid(name, format!("`{label}` is a PRINT call, not a comparison")));
            }
            if expected.iter().any(|e: &ExpectedString| e.site == site) {
                return Err(invalid(name, format!("`{label}` listed twice")));
            }
            expected.push(ExpectedString {
                label,
                ideal,
                site,
                builtin: *builtin,
            });
        }
        for (site, builtin, rom) in &statics {
            if *builtin != Builtin::Print && !expected.iter().any(|e| e.site == *site) {
                return Err(invalid(
                    name,
                    format!(
                        "comparison against {:?} at instruction {site} has no `;@ expect` line",
                        String::from_utf8_lossy(rom)
                    ),
                ));
            }
        }
        if category == Category::NoStrings && !statics.is_empty() {
            return Err(invalid(name, "no-strings scenario contains comparison calls"));
        }
        Ok(Scenario {
            name: name.to_string(),
            category,
            expected,
            source: source.to_string(),
            program,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Io(path.display().to_string(), e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Scenario::parse(&name, &text)
    }

    pub fn expected_by_label(&self, label: &str) -> Option<&ExpectedString> {
        self.expected.iter().find(|e| e.label == label)
    }
}

/// Load every `*.s` file in `dir`, sorted by name.
pub fn load_dir(dir: &Path) -> Result<Vec<Scenario>, ScenarioError> {
    let io = |e| ScenarioError::Io(dir.display().to_string(), e);
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "s"))
        .collect();
    paths.sort();
    paths.iter().map(|p| Scenario::from_path(p)).collect()
}

/// Resolve a scenario argument: a built-in name or a path to a file.
pub fn resolve(arg: &str) -> Result<Scenario, ScenarioError> {
    if let Some(s) = crate::corpus::get(arg) {
        return s;
    }
    Scenario::from_path(Path::new(arg))
}
