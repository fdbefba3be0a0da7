//! Forward secret taint: values loaded from `.secret` regions, propagated
//! through register def-use and region-granular memory.

use std::collections::BTreeSet;

use serde::Serialize;

use super::defuse::DefUse;
use crate::isa::{Opcode, Operand, Program, Reg, RegionKind};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TaintResult {
    pub secret_branches: BTreeSet<usize>,
    pub secret_tainted_values: BTreeSet<(usize, Reg)>,
    /// Regions holding secret data initially or after a tainted store.
    pub tainted_regions: BTreeSet<usize>,
}

pub fn taint_secret_branches(p: &Program, du: &DefUse) -> TaintResult {
    let mut tainted = vec![false; p.len()];
    let mut regions: BTreeSet<usize> = p
        .regions
        .iter()
        .enumerate()
        .filter(|(_, r)| r.kind == RegionKind::Secret)
        .map(|(i, _)| i)
        .collect();

    let reg_tainted = |tainted: &[bool], i: usize, r: Reg| {
        du.reaching[i]
            .iter()
            .any(|(rr, d)| *rr == r && tainted[*d])
    };

    let mut changed = true;
    while changed {
        changed = false;
        for (i, inst) in p.instructions.iter().enumerate() {
            let any_use = inst.uses().into_iter().any(|r| reg_tainted(&tainted, i, r));
            match inst.opcode {
                Opcode::Load => {
                    let mem = inst.mem.as_ref().unwrap();
                    let from_memory = match p.static_region(mem) {
                        Some(r) => regions.contains(&r),
                        None => !regions.is_empty(),
                    };
                    if (from_memory || any_use) && !tainted[i] {
                        tainted[i] = true;
                        changed = true;
                    }
                }
                Opcode::Store => {
                    let value_tainted = match inst.src1 {
                        Some(Operand::Reg(r)) => reg_tainted(&tainted, i, r),
                        _ => false,
                    };
                    if value_tainted {
                        let before = regions.len();
                        match p.static_region(inst.mem.as_ref().unwrap()) {
                            Some(r) => {
                                regions.insert(r);
                            }
                            None => regions.extend(0..p.regions.len()),
                        }
                        changed |= regions.len() != before;
                    }
                }
                _ => {
                    if inst.def().is_some() && any_use && !tainted[i] {
                        tainted[i] = true;
                        changed = true;
                    }
                }
            }
        }
    }

    let mut res = TaintResult {
        tainted_regions: regions,
        ..Default::default()
    };
    for (i, inst) in p.instructions.iter().enumerate() {
        if tainted[i] {
            if let Some(d) = inst.def() {
                res.secret_tainted_values.insert((i, d));
            }
        }
        if inst.opcode.is_cond_branch() && inst.uses().into_iter().any(|r| reg_tainted(&tainted, i, r)) {
            res.secret_branches.insert(i);
        }
    }
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{build_cfg, def_use};
    use crate::isa::parse_program;

    fn taint(src: &str) -> TaintResult {
        let p = parse_program(src).unwrap();
        let du = def_use(&p, &build_cfg(&p));
        taint_secret_branches(&p, &du)
    }

    #[test]
    fn constant_branch_is_clean() {
        let t = taint(".secret k 0x100 8\nli r1, 3\nbeq r1, 3, x\nx:\nhalt");
        assert!(t.secret_branches.is_empty());
    }

    #[test]
    fn secret_xor_self_still_tainted() {
        let t = taint(".secret k 0x100 8\nload r1, k\nxor r2, r1, r1\nbeq r2, 0, x\nx:\nhalt");
        assert_eq!(t.secret_branches, BTreeSet::from([2]));
    }

    #[test]
    fn taint_flows_through_memory() {
        let t = taint(
            ".secret k 0x100 8\n.region buf 0x200 8 public\nload r1, k\nstore r1, buf\nload r2, buf\nbne r2, 0, x\nx:\nhalt",
        );
        assert!(t.secret_branches.contains(&3));
        assert!(t.tainted_regions.contains(&1));
    }

    #[test]
    fn public_load_is_clean() {
        let t = taint(".secret k 0x100 8\n.region n 0x200 8 public\nload r1, n\nbne r1, 0, x\nx:\nhalt");
        assert!(t.secret_branches.is_empty());
    }
}
