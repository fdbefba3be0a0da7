//! Montgomery-ladder modular exponentiation with one secret-dependent branch
//! per key bit.
//!
//! Key bits live one per cache line (MSB first) so every key-bit branch waits
//! on its own miss. The modulus must be a power of two: the ISA has no
//! division or right shift, so reduction is a mask. The cycle counter at the
//! join point of every iteration is stored to `times`.

use crate::analysis::{annotate, AnnotationPolicy, MarkedProgram};
use crate::isa::{parse_program, Program};

pub const KEY_BASE: u64 = 0x10_0000;
pub const KEY_STRIDE: u64 = 64;
pub const TIMES_BASE: u64 = 0x20_0000;
pub const OUT_BASE: u64 = 0x21_0000;
/// Largest key the fixed memory layout holds.
pub const MAX_KEY_BITS: u32 = 64;

/// The 19-bit key used throughout the attack experiments.
pub const STANDARD_KEY: u64 = 0b1011001011110111111;
pub const STANDARD_KEY_BITS: u32 = 19;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LadderParams {
    pub key: u64,
    pub nbits: u32,
    pub base: u64,
    /// Power of two; 0 stands for 2^64.
    pub modulus: u64,
}

impl LadderParams {
    pub fn standard() -> LadderParams {
        LadderParams {
            key: STANDARD_KEY,
            nbits: STANDARD_KEY_BITS,
            base: 7,
            modulus: 1 << 32,
        }
    }

    /// Bits in loop order, most significant first.
    pub fn bits(&self) -> Vec<u8> {
        (0..self.nbits)
            .rev()
            .map(|k| ((self.key >> k) & 1) as u8)
            .collect()
    }
}

/// Assembly text of the ladder. Only the loop bound and the `.word` data
/// depend on the key, so every key length produces identical code addresses.
pub fn ladder_source(lp: &LadderParams) -> String {
    assert!(lp.nbits >= 1 && lp.nbits <= MAX_KEY_BITS);
    assert!(lp.modulus == 0 || lp.modulus.is_power_of_two());
    let mask = lp.modulus.wrapping_sub(1) as i64;
    let mut s = format!(
        "\
.secret key {KEY_BASE:#x} {key_size}
.region times {TIMES_BASE:#x} {times_size} public
.region out {OUT_BASE:#x} 16 public
"
    ,
        key_size = MAX_KEY_BITS as u64 * KEY_STRIDE,
        times_size = MAX_KEY_BITS * 8,
    );
    for (j, b) in lp.bits().iter().enumerate() {
        if *b != 0 {
            s.push_str(&format!(".word key+{} 1\n", j as u64 * KEY_STRIDE));
        }
    }
    s.push_str(&format!(
        "\
    li r1, 1
    li r2, {base}
    and r2, r2, {mask}
    li r4, 0
    li r5, 0
    li r9, {end}
loop:
    load r6, key(r4)
    beq r6, 0, zero
    mul r1, r1, r2
    and r1, r1, {mask}
    mul r2, r2, r2
    and r2, r2, {mask}
    jmp join
zero:
    mul r2, r1, r2
    and r2, r2, {mask}
    mul r1, r1, r1
    and r1, r1, {mask}
    jmp join
join:
    rdcycle r7
    store r7, times(r5)
    add r4, r4, {KEY_STRIDE}
    add r5, r5, 8
    bne r4, r9, loop
    store r1, out
    halt
",
        base = lp.base,
        end = lp.nbits as u64 * KEY_STRIDE,
    ));
    s
}

pub fn ladder_program(lp: &LadderParams) -> Program {
    parse_program(&ladder_source(lp)).expect("ladder source assembles")
}

/// The ladder with compiler annotations (key-bit branch front-end restricted).
pub fn build_rsa_ladder(lp: &LadderParams) -> MarkedProgram {
    annotate(&ladder_program(lp), &AnnotationPolicy::default())
}

/// Index of the key-bit branch in every ladder program.
pub fn key_branch_index(p: &Program) -> usize {
    p.labels["loop"] + 1
}
