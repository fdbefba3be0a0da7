//! Line-oriented assembly format.
//!
//! ```text
//! .region arr1 0x1000 128 sandbox
//! .secret key 0x2000 64
//! .entry main
//! main:
//!     li r1, 5            # comment
//!     load r2, arr1+8(r1)
//!     blt r2, r1, main [bdi dep=0 bid=1]
//!     halt
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::program::{
    Instruction, MemRef, Opcode, Operand, Program, Reg, Region, RegionKind, NUM_REGS,
};
use super::tags::{BranchId, TagWord};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AsmError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: undefined label `{label}`")]
    UndefinedLabel { line: usize, label: String },
    #[error("line {line}: duplicate label `{label}`")]
    DuplicateLabel { line: usize, label: String },
    #[error("regions `{first}` and `{second}` overlap")]
    OverlappingRegions { first: String, second: String },
}

struct RawInst<'a> {
    line: usize,
    col: usize,
    text: &'a str,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> AsmError {
    AsmError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn parse_int(s: &str) -> Option<i64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let v = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        u64::from_str_radix(&h.replace('_', ""), 16).ok()? as i64
    } else if let Some(b) = body.strip_prefix("0b") {
        u64::from_str_radix(&b.replace('_', ""), 2).ok()? as i64
    } else {
        body.replace('_', "").parse::<u64>().ok()? as i64
    };
    Some(if neg { v.wrapping_neg() } else { v })
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_reg(s: &str) -> Option<Reg> {
    let n: usize = s.trim().strip_prefix(['r', 'R'])?.parse().ok()?;
    (n < NUM_REGS).then_some(Reg(n as u8))
}

/// Parses assembly text into a [`Program`] with resolved labels and regions.
pub fn parse_program(text: &str) -> Result<Program, AsmError> {
    let mut labels: BTreeMap<String, usize> = BTreeMap::new();
    let mut regions: Vec<Region> = Vec::new();
    let mut entry_label: Option<(usize, String)> = None;
    let mut words_init: Vec<(usize, usize, String, String)> = Vec::new();
    let mut raw: Vec<RawInst> = Vec::new();

    for (lineno, full) in text.lines().enumerate() {
        let line = lineno + 1;
        let code = full.split('#').next().unwrap_or("");
        let indent = code.len() - code.trim_start().len();
        let mut rest = code.trim();
        let mut col = indent + 1;
        // Leading `label:` prefixes.
        while let Some(pos) = rest.find(':') {
            let name = rest[..pos].trim();
            if !is_ident(name) || name.starts_with('.') {
                break;
            }
            if labels.insert(name.to_string(), raw.len()).is_some() {
                return Err(AsmError::DuplicateLabel {
                    line,
                    label: name.to_string(),
                });
            }
            let after = &rest[pos + 1..];
            col += pos + 1 + (after.len() - after.trim_start().len());
            rest = after.trim();
        }
        if rest.is_empty() {
            continue;
        }
        if let Some(directive) = rest.strip_prefix('.') {
            let words: Vec<&str> = directive.split_whitespace().collect();
            match words.as_slice() {
                ["region", name, base, size, kind] => {
                    let kind = RegionKind::from_name(kind)
                        .ok_or_else(|| syntax(line, col, format!("unknown region kind `{kind}`")))?;
                    regions.push(region(line, col, name, base, size, kind)?);
                }
                ["secret", name, base, size] => {
                    regions.push(region(line, col, name, base, size, RegionKind::Secret)?);
                }
                ["entry", label] => entry_label = Some((line, label.to_string())),
                ["word", addr, value] => {
                    words_init.push((line, col, addr.to_string(), value.to_string()))
                }
                _ => return Err(syntax(line, col, format!("malformed directive `.{directive}`"))),
            }
            continue;
        }
        raw.push(RawInst {
            line,
            col,
            text: rest,
        });
    }

    for (i, a) in regions.iter().enumerate() {
        if regions[..i].iter().any(|r| r.name == a.name) {
            return Err(syntax(0, 0, format!("duplicate region `{}`", a.name)));
        }
        if let Some(b) = regions[..i].iter().find(|b| b.overlaps(a)) {
            return Err(AsmError::OverlappingRegions {
                first: b.name.clone(),
                second: a.name.clone(),
            });
        }
    }

    let ctx = Ctx {
        labels: &labels,
        regions: &regions,
    };
    let instructions = raw
        .iter()
        .map(|r| ctx.parse_inst(r))
        .collect::<Result<Vec<_>, _>>()?;

    let entry = match entry_label {
        Some((line, name)) => *labels
            .get(&name)
            .ok_or(AsmError::UndefinedLabel { line, label: name })?,
        None => 0,
    };

    let mut data = BTreeMap::new();
    for (line, col, addr, value) in words_init {
        let (sym, off) = match addr.split_once('+') {
            Some((s, o)) => (s, Some(o)),
            None => (addr.as_str(), None),
        };
        let base = match regions.iter().find(|r| r.name == sym) {
            Some(r) => r.base,
            None if off.is_none() => parse_int(sym)
                .ok_or_else(|| syntax(line, col, format!("bad address `{addr}`")))?
                as u64,
            None => return Err(syntax(line, col, format!("unknown region `{sym}`"))),
        };
        let off = match off {
            Some(o) => parse_int(o).ok_or_else(|| syntax(line, col, format!("bad offset `{o}`")))?,
            None => 0,
        };
        let v = parse_int(&value).ok_or_else(|| syntax(line, col, format!("bad value `{value}`")))?;
        data.insert(base.wrapping_add(off as u64), v as u64);
    }

    Ok(Program {
        instructions,
        labels,
        regions,
        entry,
        data,
    })
}

fn region(
    line: usize,
    col: usize,
    name: &str,
    base: &str,
    size: &str,
    kind: RegionKind,
) -> Result<Region, AsmError> {
    if !is_ident(name) {
        return Err(syntax(line, col, format!("bad region name `{name}`")));
    }
    let base = parse_int(base).ok_or_else(|| syntax(line, col, format!("bad base `{base}`")))?;
    let size = parse_int(size).ok_or_else(|| syntax(line, col, format!("bad size `{size}`")))?;
    Ok(Region {
        name: name.to_string(),
        base: base as u64,
        size: size as u64,
        kind,
    })
}

struct Ctx<'a> {
    labels: &'a BTreeMap<String, usize>,
    regions: &'a [Region],
}

impl Ctx<'_> {
    fn parse_inst(&self, raw: &RawInst) -> Result<Instruction, AsmError> {
        let line = raw.line;
        let err = |msg: String| syntax(line, raw.col, msg);

        let (body, tags) = match raw.text.find('[') {
            Some(pos) => {
                let suffix = raw.text[pos..].trim();
                let inner = suffix
                    .strip_prefix('[')
                    .and_then(|s| s.strip_suffix(']'))
                    .ok_or_else(|| syntax(line, raw.col + pos, "unterminated tag suffix"))?;
                let tags = parse_tags(inner).map_err(|m| syntax(line, raw.col + pos, m))?;
                (raw.text[..pos].trim(), tags)
            }
            None => (raw.text, TagWord::LEGACY),
        };

        let (mnemonic, args_text) = match body.find(char::is_whitespace) {
            Some(pos) => (&body[..pos], body[pos..].trim()),
            None => (body, ""),
        };
        let opcode = Opcode::from_mnemonic(mnemonic)
            .ok_or_else(|| err(format!("unknown mnemonic `{mnemonic}`")))?;
        let args: Vec<&str> = if args_text.is_empty() {
            Vec::new()
        } else {
            args_text.split(',').map(str::trim).collect()
        };

        let arity = |n: &[usize]| -> Result<(), AsmError> {
            if n.contains(&args.len()) {
                Ok(())
            } else {
                Err(err(format!(
                    "`{mnemonic}` expects {n:?} operands, got {}",
                    args.len()
                )))
            }
        };
        let reg = |s: &str| parse_reg(s).ok_or_else(|| err(format!("expected register, got `{s}`")));
        let reg_or_imm = |s: &str| -> Result<Operand, AsmError> {
            if let Some(r) = parse_reg(s) {
                Ok(Operand::Reg(r))
            } else {
                self.value(s, line, raw.col).map(Operand::Imm)
            }
        };
        let target = |s: &str| -> Result<usize, AsmError> {
            self.labels
                .get(s)
                .copied()
                .ok_or_else(|| AsmError::UndefinedLabel {
                    line,
                    label: s.to_string(),
                })
        };

        let mut inst = Instruction::new(opcode);
        inst.tags = tags;
        match opcode {
            Opcode::Add | Opcode::Sub | Opcode::Mul | Opcode::And | Opcode::Xor | Opcode::Shl => {
                arity(&[3])?;
                inst.dest = Some(reg(args[0])?);
                inst.src1 = Some(Operand::Reg(reg(args[1])?));
                inst.src2 = Some(reg_or_imm(args[2])?);
            }
            Opcode::Li => {
                arity(&[2])?;
                inst.dest = Some(reg(args[0])?);
                inst.src1 = Some(Operand::Imm(self.value(args[1], line, raw.col)?));
            }
            Opcode::Load => {
                arity(&[2])?;
                inst.dest = Some(reg(args[0])?);
                inst.mem = Some(self.mem(args[1], line, raw.col)?);
            }
            Opcode::Store => {
                arity(&[2])?;
                inst.src1 = Some(Operand::Reg(reg(args[0])?));
                inst.mem = Some(self.mem(args[1], line, raw.col)?);
            }
            Opcode::Beq | Opcode::Bne | Opcode::Blt => {
                arity(&[3])?;
                inst.src1 = Some(Operand::Reg(reg(args[0])?));
                inst.src2 = Some(reg_or_imm(args[1])?);
                inst.target = Some(target(args[2])?);
            }
            Opcode::Jmp => {
                arity(&[1])?;
                inst.target = Some(target(args[0])?);
            }
            Opcode::Jmpi => {
                arity(&[1])?;
                inst.src1 = Some(Operand::Reg(reg(args[0])?));
            }
            Opcode::Clflush => {
                arity(&[1])?;
                inst.mem = Some(self.mem(args[0], line, raw.col)?);
            }
            Opcode::Rdcycle => {
                arity(&[1, 2])?;
                inst.dest = Some(reg(args[0])?);
                if args.len() == 2 {
                    inst.src1 = Some(Operand::Reg(reg(args[1])?));
                }
            }
            Opcode::Nop | Opcode::Halt => arity(&[0])?,
        }
        Ok(inst)
    }

    /// A number, a label (its pc) or a region name (its base).
    fn value(&self, s: &str, line: usize, col: usize) -> Result<i64, AsmError> {
        if let Some(v) = parse_int(s) {
            return Ok(v);
        }
        if let Some(idx) = self.labels.get(s) {
            return Ok(Program::pc_of(*idx) as i64);
        }
        if let Some(r) = self.regions.iter().find(|r| r.name == s) {
            return Ok(r.base as i64);
        }
        if is_ident(s) {
            Err(AsmError::UndefinedLabel {
                line,
                label: s.to_string(),
            })
        } else {
            Err(syntax(line, col, format!("expected value, got `{s}`")))
        }
    }

    fn mem(&self, s: &str, line: usize, col: usize) -> Result<MemRef, AsmError> {
        let s = s.trim();
        let (addr, index) = match s.find('(') {
            Some(pos) => {
                let inner = s[pos..]
                    .strip_prefix('(')
                    .and_then(|t| t.strip_suffix(')'))
                    .ok_or_else(|| syntax(line, col, format!("bad memory operand `{s}`")))?;
                let r = parse_reg(inner)
                    .ok_or_else(|| syntax(line, col, format!("bad index register `{inner}`")))?;
                (s[..pos].trim(), Some(r))
            }
            None => (s, None),
        };
        if addr.is_empty() {
            return Ok(MemRef {
                symbol: None,
                base: 0,
                offset: 0,
                index,
            });
        }
        if let Some(v) = parse_int(addr) {
            return Ok(MemRef {
                symbol: None,
                base: 0,
                offset: v,
                index,
            });
        }
        let split = addr[1..].find(['+', '-']).map(|p| p + 1);
        let (name, offset) = match split {
            Some(p) => (
                addr[..p].trim(),
                parse_int(&addr[p..].replace(' ', ""))
                    .ok_or_else(|| syntax(line, col, format!("bad offset in `{addr}`")))?,
            ),
            None => (addr, 0),
        };
        let region = self
            .regions
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| AsmError::UndefinedLabel {
                line,
                label: name.to_string(),
            })?;
        Ok(MemRef {
            symbol: Some(region.name.clone()),
            base: region.base,
            offset,
            index,
        })
    }
}

fn parse_tags(inner: &str) -> Result<TagWord, String> {
    let mut t = TagWord::LEGACY;
    for word in inner.split_whitespace() {
        match word {
            "fe" => t.fe_restricted = true,
            "be" => t.be_restricted = true,
            "bdi" => t.bd_informed = true,
            _ => {
                let (key, val) = word
                    .split_once('=')
                    .ok_or_else(|| format!("unknown tag `{word}`"))?;
                let id = val
                    .parse::<u8>()
                    .ok()
                    .and_then(BranchId::new)
                    .ok_or_else(|| format!("branch id out of range: `{val}`"))?;
                match key {
                    "dep" => t.dependent_branch_id = id,
                    "bid" => t.branch_id = id,
                    _ => return Err(format!("unknown tag `{word}`")),
                }
            }
        }
    }
    Ok(t)
}

/// Renders a program in the format accepted by [`parse_program`].
pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for r in &p.regions {
        let _ = writeln!(
            out,
            ".region {} {:#x} {} {}",
            r.name,
            r.base,
            r.size,
            r.kind.name()
        );
    }
    for (addr, v) in &p.data {
        let _ = writeln!(out, ".word {addr:#x} {v:#x}");
    }
    let names = p.label_names();
    let label_for = |idx: usize| -> String {
        names
            .get(&idx)
            .and_then(|v| v.first())
            .map(|s| s.to_string())
            .unwrap_or_else(|| format!("L{idx}"))
    };
    if p.entry != 0 {
        let _ = writeln!(out, ".entry {}", label_for(p.entry));
    }
    // Labels referenced but not declared get synthesised names.
    let mut synth: BTreeMap<usize, String> = BTreeMap::new();
    for inst in &p.instructions {
        if let Some(t) = inst.target {
            if !names.contains_key(&t) {
                synth.insert(t, format!("L{t}"));
            }
        }
    }
    if p.entry != 0 && !names.contains_key(&p.entry) {
        synth.insert(p.entry, format!("L{}", p.entry));
    }
    for idx in 0..=p.instructions.len() {
        if let Some(ls) = names.get(&idx) {
            for l in ls {
                let _ = writeln!(out, "{l}:");
            }
        }
        if let Some(l) = synth.get(&idx) {
            let _ = writeln!(out, "{l}:");
        }
        let Some(inst) = p.instructions.get(idx) else {
            break;
        };
        let _ = write!(out, "    {}", inst.opcode.mnemonic());
        let mut args: Vec<String> = Vec::new();
        match inst.opcode {
            Opcode::Store => {
                args.extend(inst.src1.map(|o| o.to_string()));
                args.extend(inst.mem.as_ref().map(|m| m.to_string()));
            }
            _ => {
                args.extend(inst.dest.map(|r| r.to_string()));
                args.extend(inst.src1.map(|o| o.to_string()));
                args.extend(inst.src2.map(|o| o.to_string()));
                args.extend(inst.mem.as_ref().map(|m| m.to_string()));
                args.extend(inst.target.map(label_for));
            }
        }
        if !args.is_empty() {
            let _ = write!(out, " {}", args.join(", "));
        }
        if let Some(s) = inst.tags.suffix() {
            let _ = write!(out, " {s}");
        }
        out.push('\n');
    }
    out
}
