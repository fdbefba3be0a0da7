use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::interp::Memory;
use super::tags::TagWord;

pub const NUM_REGS: usize = 16;
/// Bytes per instruction slot; instruction `i` lives at pc `i * INST_BYTES`.
pub const INST_BYTES: u64 = 4;
/// Width of every LOAD/STORE access.
pub const WORD_BYTES: u64 = 8;

/// Architectural register `r0`..`r15`. `r0` always reads as zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Reg(pub u8);

impl Reg {
    pub const ZERO: Reg = Reg(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Opcode {
    Add,
    Sub,
    Mul,
    And,
    Xor,
    Shl,
    Li,
    Load,
    Store,
    Beq,
    Bne,
    Blt,
    Jmp,
    Jmpi,
    Clflush,
    Rdcycle,
    Nop,
    Halt,
}

impl Opcode {
    pub const ALL: [Opcode; 18] = [
        Opcode::Add,
        Opcode::Sub,
        Opcode::Mul,
        Opcode::And,
        Opcode::Xor,
        Opcode::Shl,
        Opcode::Li,
        Opcode::Load,
        Opcode::Store,
        Opcode::Beq,
        Opcode::Bne,
        Opcode::Blt,
        Opcode::Jmp,
        Opcode::Jmpi,
        Opcode::Clflush,
        Opcode::Rdcycle,
        Opcode::Nop,
        Opcode::Halt,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Add => "add",
            Opcode::Sub => "sub",
            Opcode::Mul => "mul",
            Opcode::And => "and",
            Opcode::Xor => "xor",
            Opcode::Shl => "shl",
            Opcode::Li => "li",
            Opcode::Load => "load",
            Opcode::Store => "store",
            Opcode::Beq => "beq",
            Opcode::Bne => "bne",
            Opcode::Blt => "blt",
            Opcode::Jmp => "jmp",
            Opcode::Jmpi => "jmpi",
            Opcode::Clflush => "clflush",
            Opcode::Rdcycle => "rdcycle",
            Opcode::Nop => "nop",
            Opcode::Halt => "halt",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Opcode> {
        Opcode::ALL
            .iter()
            .copied()
            .find(|op| op.mnemonic().eq_ignore_ascii_case(s))
    }

    pub fn is_alu(self) -> bool {
        matches!(
            self,
            Opcode::Add | Opcode::Sub | Opcode::Mul | Opcode::And | Opcode::Xor | Opcode::Shl
        )
    }

    pub fn is_cond_branch(self) -> bool {
        matches!(self, Opcode::Beq | Opcode::Bne | Opcode::Blt)
    }

    pub fn is_control(self) -> bool {
        self.is_cond_branch() || matches!(self, Opcode::Jmp | Opcode::Jmpi)
    }

    pub fn is_mem(self) -> bool {
        matches!(self, Opcode::Load | Opcode::Store | Opcode::Clflush)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operand {
    Reg(Reg),
    Imm(i64),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => write!(f, "{r}"),
            Operand::Imm(v) => write!(f, "{v}"),
        }
    }
}

/// `symbol + offset + index`; the symbol is resolved to `base` at parse time.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemRef {
    pub symbol: Option<String>,
    pub base: u64,
    pub offset: i64,
    pub index: Option<Reg>,
}

impl MemRef {
    pub fn constant(&self) -> Option<u64> {
        self.index
            .is_none()
            .then(|| self.base.wrapping_add(self.offset as u64))
    }

    pub fn address(&self, index_value: u64) -> u64 {
        self.base
            .wrapping_add(self.offset as u64)
            .wrapping_add(index_value)
    }
}

impl fmt::Display for MemRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.symbol {
            Some(s) => {
                write!(f, "{s}")?;
                if self.offset > 0 {
                    write!(f, "+{}", self.offset)?;
                } else if self.offset < 0 {
                    write!(f, "{}", self.offset)?;
                }
            }
            None => write!(f, "{}", self.offset)?,
        }
        if let Some(r) = self.index {
            write!(f, "({r})")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub opcode: Opcode,
    pub dest: Option<Reg>,
    pub src1: Option<Operand>,
    pub src2: Option<Operand>,
    pub mem: Option<MemRef>,
    /// Resolved instruction index of a branch or direct jump target.
    pub target: Option<usize>,
    pub tags: TagWord,
}

impl Instruction {
    pub fn new(opcode: Opcode) -> Instruction {
        Instruction {
            opcode,
            dest: None,
            src1: None,
            src2: None,
            mem: None,
            target: None,
            tags: TagWord::LEGACY,
        }
    }

    /// Register written by this instruction, ignoring writes to `r0`.
    pub fn def(&self) -> Option<Reg> {
        self.dest.filter(|r| *r != Reg::ZERO)
    }

    /// Registers read by this instruction (never `r0`).
    pub fn uses(&self) -> Vec<Reg> {
        let mut out = Vec::with_capacity(3);
        for op in [self.src1, self.src2].into_iter().flatten() {
            if let Operand::Reg(r) = op {
                out.push(r);
            }
        }
        if let Some(r) = self.mem.as_ref().and_then(|m| m.index) {
            out.push(r);
        }
        out.retain(|r| *r != Reg::ZERO);
        out.dedup();
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionKind {
    Public,
    Secret,
    SandboxBound,
}

impl RegionKind {
    pub fn name(self) -> &'static str {
        match self {
            RegionKind::Public => "public",
            RegionKind::Secret => "secret",
            RegionKind::SandboxBound => "sandbox",
        }
    }

    pub fn from_name(s: &str) -> Option<RegionKind> {
        match s {
            "public" => Some(RegionKind::Public),
            "secret" => Some(RegionKind::Secret),
            "sandbox" | "sandbox-bound" | "sandbox_bound" => Some(RegionKind::SandboxBound),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub base: u64,
    pub size: u64,
    pub kind: RegionKind,
}

impl Region {
    pub fn contains(&self, addr: u64, len: u64) -> bool {
        addr >= self.base && addr.saturating_add(len) <= self.base.saturating_add(self.size)
    }

    pub fn overlaps(&self, other: &Region) -> bool {
        self.base < other.base.saturating_add(other.size)
            && other.base < self.base.saturating_add(self.size)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub instructions: Vec<Instruction>,
    pub labels: BTreeMap<String, usize>,
    pub regions: Vec<Region>,
    pub entry: usize,
    /// Initial memory words from `.word` directives.
    #[serde(default)]
    pub data: BTreeMap<u64, u64>,
}

impl Program {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn pc_of(index: usize) -> u64 {
        index as u64 * INST_BYTES
    }

    /// Instruction index for a pc, if it names an instruction slot.
    pub fn index_of_pc(&self, pc: u64) -> Option<usize> {
        pc.is_multiple_of(INST_BYTES)
            .then_some((pc / INST_BYTES) as usize)
            .filter(|i| *i < self.instructions.len())
    }

    pub fn region(&self, name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn region_index(&self, name: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.name == name)
    }

    /// Region that fully contains `[addr, addr + len)`.
    pub fn region_at(&self, addr: u64, len: u64) -> Option<&Region> {
        self.regions.iter().find(|r| r.contains(addr, len))
    }

    /// Static region touched by a memory operand with a symbol.
    pub fn static_region(&self, mem: &MemRef) -> Option<usize> {
        mem.symbol.as_deref().and_then(|s| self.region_index(s))
    }

    pub fn cond_branches(&self) -> impl Iterator<Item = usize> + '_ {
        self.instructions
            .iter()
            .enumerate()
            .filter(|(_, i)| i.opcode.is_cond_branch())
            .map(|(idx, _)| idx)
    }

    /// First label (alphabetically) attached to each instruction index.
    pub fn label_names(&self) -> BTreeMap<usize, Vec<&str>> {
        let mut out: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
        for (name, idx) in &self.labels {
            out.entry(*idx).or_default().push(name);
        }
        out
    }

    /// Indices whose address is taken by `li rd, label` (possible JMPI targets).
    pub fn address_taken(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .instructions
            .iter()
            .filter(|i| i.opcode == Opcode::Li)
            .filter_map(|i| match i.src1 {
                Some(Operand::Imm(v)) if v >= 0 => self.index_of_pc(v as u64),
                _ => None,
            })
            .filter(|idx| self.labels.values().any(|l| l == idx))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Memory holding the `.word` initialisers.
    pub fn initial_memory(&self) -> Memory {
        let mut m = Memory::new();
        for (&a, &v) in &self.data {
            m.write_u64(a, v);
        }
        m
    }

    /// Copy of the program with every tag reset to the legacy encoding.
    pub fn stripped(&self) -> Program {
        let mut p = self.clone();
        for inst in &mut p.instructions {
            inst.tags = TagWord::LEGACY;
        }
        p
    }
}
