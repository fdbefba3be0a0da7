//! Mini-ISA: instructions, the restriction tag word, the assembly format and
//! the sequential interpreter every pipeline configuration must agree with.

mod asm;
mod interp;
mod program;
mod tags;

pub use asm::{parse_program, print_program, AsmError};
pub use interp::{
    alu, branch_taken, interpret, interpret_with, ArchState, InterpError, InterpOptions, Memory,
    Retired,
};
pub use program::{
    Instruction, MemRef, Opcode, Operand, Program, Reg, Region, RegionKind, INST_BYTES, NUM_REGS,
    WORD_BYTES,
};
pub use tags::{BranchId, BranchMark, DependencyMark, TagWord, TAG_BITS};
