//! Register def-use chains from reaching definitions, plus the memory may-alias
//! relation used to link stores to loads.

use std::collections::BTreeSet;

use super::cfg::Cfg;
use crate::isa::{MemRef, Opcode, Program, Reg, NUM_REGS};

#[derive(Clone, Debug, Default)]
pub struct DefUse {
    /// For each defining instruction, the instructions that read its value.
    pub uses_of: Vec<BTreeSet<usize>>,
    /// For each instruction, the `(register, defining instruction)` pairs that reach it.
    pub reaching: Vec<Vec<(Reg, usize)>>,
}

pub fn def_use(p: &Program, cfg: &Cfg) -> DefUse {
    let n = p.len();
    let mut du = DefUse {
        uses_of: vec![BTreeSet::new(); n],
        reaching: vec![Vec::new(); n],
    };
    if n == 0 {
        return du;
    }
    let nb = cfg.blocks.len();
    // Per-register reaching definition sets at block entry.
    let mut block_in: Vec<[BTreeSet<usize>; NUM_REGS]> =
        vec![std::array::from_fn(|_| BTreeSet::new()); nb];
    let transfer = |b: usize, state: &mut [BTreeSet<usize>; NUM_REGS]| {
        for i in cfg.blocks[b].instructions() {
            if let Some(d) = p.instructions[i].def() {
                state[d.index()].clear();
                state[d.index()].insert(i);
            }
        }
    };
    let mut changed = true;
    while changed {
        changed = false;
        for b in 0..nb {
            let mut out = block_in[b].clone();
            transfer(b, &mut out);
            for &s in &cfg.blocks[b].succs {
                if s >= nb {
                    continue;
                }
                for r in 0..NUM_REGS {
                    let before = block_in[s][r].len();
                    block_in[s][r].extend(out[r].iter().copied());
                    changed |= block_in[s][r].len() != before;
                }
            }
        }
    }
    for b in 0..nb {
        let mut state = block_in[b].clone();
        for i in cfg.blocks[b].instructions() {
            let inst = &p.instructions[i];
            for r in inst.uses() {
                for &d in &state[r.index()] {
                    du.reaching[i].push((r, d));
                    du.uses_of[d].insert(i);
                }
            }
            if let Some(d) = inst.def() {
                state[d.index()].clear();
                state[d.index()].insert(i);
            }
        }
    }
    du
}

/// Two accesses are provably disjoint only when both name distinct declared
/// regions at constant offsets; everything else may alias.
pub fn may_alias(p: &Program, a: &MemRef, b: &MemRef) -> bool {
    if a.index.is_some() || b.index.is_some() {
        return true;
    }
    match (p.static_region(a), p.static_region(b)) {
        (Some(ra), Some(rb)) => ra == rb,
        _ => true,
    }
}

/// Instructions that directly consume the effect of `i`.
pub fn direct_dependents(p: &Program, du: &DefUse, i: usize) -> BTreeSet<usize> {
    let mut out = du.uses_of[i].clone();
    let inst = &p.instructions[i];
    if inst.opcode == Opcode::Store {
        let sm = inst.mem.as_ref().expect("store address");
        for (j, other) in p.instructions.iter().enumerate() {
            if other.opcode == Opcode::Load && may_alias(p, sm, other.mem.as_ref().unwrap()) {
                out.insert(j);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::cfg::build_cfg;
    use crate::isa::parse_program;

    fn deps(src: &str, i: usize) -> BTreeSet<usize> {
        let p = parse_program(src).unwrap();
        let cfg = build_cfg(&p);
        direct_dependents(&p, &def_use(&p, &cfg), i)
    }

    #[test]
    fn register_chain() {
        let d = deps("li r1, 1\nadd r2, r1, r1\nxor r3, r2, r2\nhalt", 1);
        assert_eq!(d, BTreeSet::from([2]));
    }

    #[test]
    fn killed_definition_does_not_reach() {
        let d = deps("li r1, 1\nli r1, 2\nadd r2, r1, r1\nhalt", 0);
        assert!(d.is_empty());
    }

    #[test]
    fn both_arms_reach_join() {
        let src = "beq r5, 0, else\nli r2, 1\njmp join\nelse:\nli r2, 2\njoin:\nadd r3, r2, r2\nhalt";
        assert_eq!(deps(src, 1), BTreeSet::from([4]));
        assert_eq!(deps(src, 3), BTreeSet::from([4]));
    }

    #[test]
    fn disjoint_regions_do_not_alias() {
        let src = ".region a 0x100 8 public\n.region b 0x200 8 public\nstore r1, a\nload r2, b\nhalt";
        assert!(deps(src, 0).is_empty());
        let src = ".region a 0x100 8 public\n.region b 0x200 8 public\nstore r1, a\nload r2, a\nhalt";
        assert_eq!(deps(src, 0), BTreeSet::from([1]));
    }

    #[test]
    fn computed_address_aliases_everything() {
        let src = ".region a 0x100 8 public\n.region b 0x200 8 public\nstore r1, 0(r3)\nload r2, b\nhalt";
        assert_eq!(deps(src, 0), BTreeSet::from([1]));
    }
}
