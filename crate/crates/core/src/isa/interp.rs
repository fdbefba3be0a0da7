//! Sequential golden model. Tags are ignored.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::program::{Instruction, Opcode, Operand, Program, NUM_REGS, WORD_BYTES};

/// Sparse byte-addressed memory. Zero bytes are never stored, so two memories
/// compare equal exactly when their contents do.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Memory {
    bytes: BTreeMap<u64, u8>,
}

impl Memory {
    pub fn new() -> Memory {
        Memory::default()
    }

    pub fn read_u8(&self, addr: u64) -> u8 {
        self.bytes.get(&addr).copied().unwrap_or(0)
    }

    pub fn write_u8(&mut self, addr: u64, v: u8) {
        if v == 0 {
            self.bytes.remove(&addr);
        } else {
            self.bytes.insert(addr, v);
        }
    }

    pub fn read_u64(&self, addr: u64) -> u64 {
        let mut out = 0u64;
        for i in 0..WORD_BYTES {
            out |= (self.read_u8(addr.wrapping_add(i)) as u64) << (8 * i);
        }
        out
    }

    pub fn write_u64(&mut self, addr: u64, v: u64) {
        for i in 0..WORD_BYTES {
            self.write_u8(addr.wrapping_add(i), (v >> (8 * i)) as u8);
        }
    }

    /// Number of non-zero bytes.
    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u8)> + '_ {
        self.bytes.iter().map(|(a, v)| (*a, *v))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchState {
    pub registers: [u64; NUM_REGS],
    pub memory: Memory,
    /// Instructions executed so far; this is what RDCYCLE returns.
    pub cycle_counter: u64,
    pub halted: bool,
}

impl ArchState {
    pub fn new(memory: Memory) -> ArchState {
        ArchState {
            registers: [0; NUM_REGS],
            memory,
            cycle_counter: 0,
            halted: false,
        }
    }

    /// Registers and memory agree. The cycle counter is timing, not state.
    pub fn same_architectural_state(&self, other: &ArchState) -> bool {
        self.registers == other.registers
            && self.memory == other.memory
            && self.halted == other.halted
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InterpError {
    #[error("step budget of {0} exceeded")]
    StepBudget(u64),
    #[error("instruction {index}: access to {addr:#x} outside every declared region")]
    SandboxViolation { index: usize, addr: u64 },
    #[error("instruction {index}: indirect jump to {pc:#x} is not an instruction")]
    BadJump { index: usize, pc: u64 },
    #[error("entry point {0} is outside the program")]
    BadEntry(usize),
}

#[derive(Clone, Copy, Debug)]
pub struct InterpOptions {
    pub max_steps: u64,
    pub check_sandbox: bool,
}

impl Default for InterpOptions {
    fn default() -> Self {
        InterpOptions {
            max_steps: 1_000_000,
            check_sandbox: false,
        }
    }
}

/// One retired instruction, as seen by trace observers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Retired {
    pub index: usize,
    /// Outcome for conditional branches.
    pub taken: Option<bool>,
    pub next: usize,
}

pub(crate) fn operand(regs: &[u64; NUM_REGS], op: Option<Operand>) -> u64 {
    match op {
        Some(Operand::Reg(r)) => regs[r.index()],
        Some(Operand::Imm(v)) => v as u64,
        None => 0,
    }
}

/// Result of an ALU opcode. Shared with the pipeline so both agree bit for bit.
pub fn alu(op: Opcode, a: u64, b: u64) -> u64 {
    match op {
        Opcode::Add => a.wrapping_add(b),
        Opcode::Sub => a.wrapping_sub(b),
        Opcode::Mul => a.wrapping_mul(b),
        Opcode::And => a & b,
        Opcode::Xor => a ^ b,
        Opcode::Shl => a.wrapping_shl((b & 63) as u32),
        _ => unreachable!("not an ALU opcode: {op:?}"),
    }
}

/// Direction of a conditional branch. BLT compares unsigned.
pub fn branch_taken(op: Opcode, a: u64, b: u64) -> bool {
    match op {
        Opcode::Beq => a == b,
        Opcode::Bne => a != b,
        Opcode::Blt => a < b,
        _ => unreachable!("not a conditional branch: {op:?}"),
    }
}

fn check(p: &Program, opts: &InterpOptions, index: usize, addr: u64) -> Result<(), InterpError> {
    if opts.check_sandbox && p.region_at(addr, WORD_BYTES).is_none() {
        return Err(InterpError::SandboxViolation { index, addr });
    }
    Ok(())
}

/// Runs `p` to completion, calling `observe` for every retired instruction.
pub fn interpret_with(
    p: &Program,
    init: &Memory,
    opts: InterpOptions,
    mut observe: impl FnMut(&ArchState, Retired),
) -> Result<ArchState, InterpError> {
    let mut st = ArchState::new(init.clone());
    if p.entry > p.len() {
        return Err(InterpError::BadEntry(p.entry));
    }
    let mut pc = p.entry;
    loop {
        let Some(inst) = p.instructions.get(pc) else {
            st.halted = true;
            return Ok(st);
        };
        if st.cycle_counter >= opts.max_steps {
            return Err(InterpError::StepBudget(opts.max_steps));
        }
        let (next, taken) = step(p, &opts, &mut st, pc, inst)?;
        st.cycle_counter += 1;
        observe(&st, Retired { index: pc, taken, next });
        if inst.opcode == Opcode::Halt {
            st.halted = true;
            return Ok(st);
        }
        pc = next;
    }
}

pub fn interpret(p: &Program, init: &Memory, opts: InterpOptions) -> Result<ArchState, InterpError> {
    interpret_with(p, init, opts, |_, _| {})
}

fn step(
    p: &Program,
    opts: &InterpOptions,
    st: &mut ArchState,
    pc: usize,
    inst: &Instruction,
) -> Result<(usize, Option<bool>), InterpError> {
    let regs = &st.registers;
    let a = operand(regs, inst.src1);
    let b = operand(regs, inst.src2);
    let addr = inst
        .mem
        .as_ref()
        .map(|m| m.address(m.index.map_or(0, |r| regs[r.index()])));
    let mut next = pc + 1;
    let mut taken = None;
    let mut write = None;
    match inst.opcode {
        op if op.is_alu() => write = Some(alu(op, a, b)),
        Opcode::Li => write = Some(a),
        Opcode::Load => {
            let addr = addr.expect("load without address");
            check(p, opts, pc, addr)?;
            write = Some(st.memory.read_u64(addr));
        }
        Opcode::Store => {
            let addr = addr.expect("store without address");
            check(p, opts, pc, addr)?;
            st.memory.write_u64(addr, a);
        }
        op if op.is_cond_branch() => {
            let t = branch_taken(op, a, b);
            taken = Some(t);
            if t {
                next = inst.target.expect("branch without target");
            }
        }
        Opcode::Jmp => next = inst.target.expect("jump without target"),
        Opcode::Jmpi => {
            next = p
                .index_of_pc(a)
                .or_else(|| (a == Program::pc_of(p.len())).then_some(p.len()))
                .ok_or(InterpError::BadJump { index: pc, pc: a })?;
        }
        Opcode::Rdcycle => write = Some(st.cycle_counter),
        Opcode::Clflush | Opcode::Nop | Opcode::Halt => {}
        _ => unreachable!(),
    }
    if let (Some(v), Some(d)) = (write, inst.def()) {
        st.registers[d.index()] = v;
    }
    Ok((next, taken))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_program;

    fn run(src: &str) -> ArchState {
        interpret(&parse_program(src).unwrap(), &Memory::new(), InterpOptions::default()).unwrap()
    }

    #[test]
    fn add_doubles() {
        let st = run("li r1, 5\nadd r2, r1, r1\nhalt");
        assert_eq!(st.registers[2], 10);
        assert!(st.halted);
    }

    #[test]
    fn r0_is_hardwired() {
        let st = run("li r0, 7\nadd r1, r0, 1\nhalt");
        assert_eq!(st.registers[0], 0);
        assert_eq!(st.registers[1], 1);
    }

    #[test]
    fn memory_and_branches() {
        let st = run("\
.region buf 0x100 64 public
    li r1, 3
loop:
    store r1, buf(r2)
    add r2, r2, 8
    sub r1, r1, 1
    bne r1, 0, loop
    load r3, buf+8
    halt");
        assert_eq!(st.registers[3], 2);
        assert_eq!(st.memory.read_u64(0x100), 3);
        assert_eq!(st.memory.read_u64(0x110), 1);
    }

    #[test]
    fn blt_is_unsigned() {
        let st = run("li r1, -1\nli r2, 1\nblt r1, r2, skip\nli r3, 9\nskip:\nhalt");
        assert_eq!(st.registers[3], 9);
    }

    #[test]
    fn budget_and_sandbox_errors() {
        let p = parse_program("top:\njmp top").unwrap();
        let opts = InterpOptions {
            max_steps: 50,
            check_sandbox: false,
        };
        assert_eq!(interpret(&p, &Memory::new(), opts), Err(InterpError::StepBudget(50)));

        let p = parse_program(".region a 0x100 8 public\nload r1, a+8\nhalt").unwrap();
        let opts = InterpOptions {
            check_sandbox: true,
            ..Default::default()
        };
        assert_eq!(
            interpret(&p, &Memory::new(), opts),
            Err(InterpError::SandboxViolation { index: 0, addr: 0x108 })
        );
        assert!(interpret(&p, &Memory::new(), InterpOptions::default()).is_ok());
    }

    #[test]
    fn indirect_jump() {
        let st = run("li r1, there\njmpi r1\nli r2, 1\nthere:\nli r3, 2\nhalt");
        assert_eq!((st.registers[2], st.registers[3]), (0, 2));
    }

    #[test]
    fn rdcycle_counts_steps() {
        let st = run("nop\nnop\nrdcycle r1\nhalt");
        assert_eq!(st.registers[1], 2);
    }

    #[test]
    fn zero_bytes_are_canonical() {
        let mut a = Memory::new();
        a.write_u64(0x10, 0xff);
        a.write_u64(0x10, 0);
        assert_eq!(a, Memory::new());
    }
}
