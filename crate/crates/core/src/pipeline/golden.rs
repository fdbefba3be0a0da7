//! Checks the pipeline's final architectural state against the interpreter.
//!
//! Values computed from RDCYCLE legitimately differ (the interpreter counts
//! instructions, the pipeline counts cycles), so registers and memory bytes
//! derived from it are excluded from the comparison.

use std::collections::BTreeSet;

use serde::Serialize;

use super::config::SimConfig;
use super::core::run;
use super::result::SimError;
use crate::analysis::MarkedProgram;
use crate::isa::{
    interpret_with, ArchState, InterpError, InterpOptions, Memory, Opcode, Program, NUM_REGS,
    WORD_BYTES,
};
use crate::policies::PolicyConfig;

/// Registers and memory bytes whose final value depends on RDCYCLE.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TimingMask {
    pub registers: [bool; NUM_REGS],
    pub bytes: BTreeSet<u64>,
}

/// Dynamic taint of the interpreter run, seeded at every RDCYCLE.
pub fn timing_mask(p: &Program, init: &Memory, opts: InterpOptions) -> Result<TimingMask, InterpError> {
    let mut mask = TimingMask::default();
    let mut prev = [0u64; NUM_REGS];
    interpret_with(p, init, opts, |st, r| {
        let inst = &p.instructions[r.index];
        let regs = &mut mask.registers;
        let mut tainted = inst.opcode == Opcode::Rdcycle
            || inst.uses().iter().any(|u| regs[u.index()]);
        let addr = inst
            .mem
            .as_ref()
            .map(|m| m.address(m.index.map_or(0, |x| prev[x.index()])));
        match inst.opcode {
            Opcode::Load => {
                let a = addr.unwrap();
                tainted |= (0..WORD_BYTES).any(|k| mask.bytes.contains(&a.wrapping_add(k)));
            }
            Opcode::Store => {
                for k in 0..WORD_BYTES {
                    let b = addr.unwrap().wrapping_add(k);
                    if tainted {
                        mask.bytes.insert(b);
                    } else {
                        mask.bytes.remove(&b);
                    }
                }
            }
            _ => {}
        }
        if let Some(d) = inst.def() {
            if d.index() != 0 {
                mask.registers[d.index()] = tainted;
            }
        }
        prev = st.registers;
    })?;
    Ok(mask)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GoldenReport {
    pub matches: bool,
    pub differing_registers: Vec<usize>,
    /// Addresses of differing bytes (outside the timing mask).
    pub differing_bytes: Vec<u64>,
    pub cycles: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum GoldenError {
    #[error("interpreter: {0}")]
    Interp(#[from] InterpError),
    #[error("pipeline: {0}")]
    Sim(#[from] SimError),
}

fn compare(gold: &ArchState, sim: &ArchState, mask: &TimingMask) -> (Vec<usize>, Vec<u64>) {
    let regs = (0..NUM_REGS)
        .filter(|&r| !mask.registers[r] && gold.registers[r] != sim.registers[r])
        .collect();
    let addrs: BTreeSet<u64> = gold.memory.iter().chain(sim.memory.iter()).map(|(a, _)| a).collect();
    let bytes = addrs
        .into_iter()
        .filter(|a| !mask.bytes.contains(a) && gold.memory.read_u8(*a) != sim.memory.read_u8(*a))
        .collect();
    (regs, bytes)
}

/// Runs the program on both models from its initial memory and compares the
/// final states. The interpreter's sandbox check follows `cfg.check_sandbox`;
/// a trap must occur in both models to count as agreement.
pub fn check_golden(
    m: &MarkedProgram,
    policy: &PolicyConfig,
    cfg: &SimConfig,
) -> Result<GoldenReport, GoldenError> {
    let p = &m.program;
    let init = p.initial_memory();
    let opts = InterpOptions {
        check_sandbox: cfg.check_sandbox,
        ..InterpOptions::default()
    };
    let gold = interpret_with(p, &init, opts, |_, _| {});
    let sim = run(m, policy, cfg);
    match (gold, sim) {
        (Ok(gold), Ok(sim)) => {
            let mask = timing_mask(p, &init, opts)?;
            let (differing_registers, differing_bytes) = compare(&gold, &sim.state, &mask);
            Ok(GoldenReport {
                matches: differing_registers.is_empty() && differing_bytes.is_empty(),
                differing_registers,
                differing_bytes,
                cycles: sim.cycles,
            })
        }
        (Err(InterpError::SandboxViolation { index: a, .. }), Err(SimError::SandboxViolation { index: b, .. }))
        | (Err(InterpError::BadJump { index: a, .. }), Err(SimError::BadJump { index: b, .. })) => {
            Ok(GoldenReport {
                matches: a == b,
                differing_registers: Vec::new(),
                differing_bytes: Vec::new(),
                cycles: 0,
            })
        }
        (Err(e), _) => Err(e.into()),
        (_, Err(e)) => Err(e.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{annotate, AnnotationPolicy};
    use crate::isa::parse_program;
    use crate::policies::{make_policy, PolicyName};

    fn marked(src: &str) -> MarkedProgram {
        annotate(&parse_program(src).unwrap(), &AnnotationPolicy::default())
    }

    #[test]
    fn rdcycle_results_are_masked() {
        let src = "\
.region out 0x1000 16 public
    rdcycle r1
    add r2, r1, 1
    store r2, out
    li r3, 7
    store r3, out+8
    halt
";
        let m = marked(src);
        let mask = timing_mask(&m.program, &Memory::new(), InterpOptions::default()).unwrap();
        assert!(mask.registers[1] && mask.registers[2] && !mask.registers[3]);
        assert!(mask.bytes.contains(&0x1000) && !mask.bytes.contains(&0x1008));
        for name in PolicyName::ALL {
            assert!(check_golden(&m, &make_policy(name), &SimConfig::default()).unwrap().matches);
        }
    }

    #[test]
    fn overwritten_timing_value_is_unmasked() {
        let m = marked(".region out 0x1000 8 public\n    rdcycle r1\n    store r1, out\n    store r0, out\n    halt\n");
        let mask = timing_mask(&m.program, &Memory::new(), InterpOptions::default()).unwrap();
        assert!(mask.bytes.is_empty());
    }
}
