use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::cfg::{build_cfg, Cfg};
use super::defuse::{def_use, DefUse};
use super::deps::{dependency_result, DependencyResult};
use super::postdom::immediate_postdominators;
use super::taint::{taint_secret_branches, TaintResult};
use crate::isa::{BranchId, Opcode, Program, TagWord};

/// Static BranchIDs. Ids wrap modulo 15; a branch whose id was already handed
/// out is demoted and left as `BR_invalid`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BranchIds {
    pub ids: BTreeMap<usize, BranchId>,
    pub demoted: BTreeSet<usize>,
}

impl BranchIds {
    /// Id usable in tags, i.e. not demoted.
    pub fn usable(&self, br: usize) -> Option<BranchId> {
        if self.demoted.contains(&br) {
            None
        } else {
            self.ids.get(&br).copied()
        }
    }
}

pub fn assign_branch_ids(p: &Program) -> BranchIds {
    let mut out = BranchIds::default();
    for (k, br) in p.cond_branches().enumerate() {
        let id = BranchId::new((k % BranchId::USABLE as usize) as u8).unwrap();
        out.ids.insert(br, id);
        if k >= BranchId::USABLE as usize {
            out.demoted.insert(br);
        }
    }
    out
}

/// Which conditional branches get the front-end restriction.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum FeMarking {
    /// Branches whose condition is secret-tainted.
    #[default]
    Tainted,
    /// No branch.
    None,
    /// Every conditional branch.
    All,
    /// Every conditional branch with index in `from..to`.
    Span { from: usize, to: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnnotationPolicy {
    pub fe: FeMarking,
}

/// Everything the analysis learned about a program.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub cfg: Cfg,
    pub ipdom: Vec<Option<usize>>,
    pub def_use: DefUse,
    pub deps: DependencyResult,
    pub branch_ids: BranchIds,
    pub taint: TaintResult,
}

pub fn analyze(p: &Program) -> Analysis {
    let cfg = build_cfg(p);
    let ipdom = immediate_postdominators(&cfg);
    let du = def_use(p, &cfg);
    let deps = dependency_result(p, &cfg, &ipdom, &du);
    let taint = taint_secret_branches(p, &du);
    Analysis {
        cfg,
        ipdom,
        def_use: du,
        deps,
        branch_ids: assign_branch_ids(p),
        taint,
    }
}

/// A program whose tags carry the analysis results, plus those results.
#[derive(Clone, Debug)]
pub struct MarkedProgram {
    pub program: Program,
    pub deps: DependencyResult,
    pub branch_ids: BranchIds,
    pub taint: TaintResult,
}

impl MarkedProgram {
    /// Wraps a program as-is (hand-written or legacy tags), still running the
    /// analysis so reports can refer to it.
    pub fn unannotated(p: Program) -> MarkedProgram {
        let a = analyze(&p);
        MarkedProgram {
            program: p,
            deps: a.deps,
            branch_ids: a.branch_ids,
            taint: a.taint,
        }
    }

    pub fn fe_branches(&self) -> Vec<usize> {
        self.program
            .instructions
            .iter()
            .enumerate()
            .filter(|(_, i)| i.opcode.is_control() && i.tags.fe_restricted)
            .map(|(k, _)| k)
            .collect()
    }
}

pub fn annotate(p: &Program, policy: &AnnotationPolicy) -> MarkedProgram {
    let a = analyze(p);
    let mut program = p.clone();
    for (i, inst) in program.instructions.iter_mut().enumerate() {
        let mut t = TagWord::LEGACY;
        let own_id = if inst.opcode.is_cond_branch() {
            a.branch_ids.usable(i)
        } else {
            None
        };
        if let Some(id) = own_id {
            t.bd_informed = true;
            t.branch_id = id;
        }
        match a.deps.most_recent_dependent_branch[i] {
            None => {
                // BD_no. A BR_valid branch shares the informed bit, so it names
                // itself instead.
                if let Some(id) = own_id {
                    t.dependent_branch_id = id;
                }
            }
            Some(_) if a.deps.multi_dep.contains(&i) => {
                t.bd_informed = true;
                t.dependent_branch_id = BranchId::INVALID;
            }
            Some(b) => {
                t.bd_informed = true;
                t.dependent_branch_id = a.branch_ids.usable(b).unwrap_or(BranchId::INVALID);
            }
        }
        if inst.opcode.is_cond_branch() {
            t.fe_restricted = match &policy.fe {
                FeMarking::Tainted => a.taint.secret_branches.contains(&i),
                FeMarking::None => false,
                FeMarking::All => true,
                FeMarking::Span { from, to } => (*from..*to).contains(&i),
            };
        }
        if inst.opcode == Opcode::Jmpi {
            // Indirect jumps always restrict younger instructions.
            t.branch_id = BranchId::INVALID;
        }
        inst.tags = t;
    }
    MarkedProgram {
        program,
        deps: a.deps,
        branch_ids: a.branch_ids,
        taint: a.taint,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{parse_program, BranchMark, DependencyMark};

    #[test]
    fn ids_in_program_order() {
        let p = parse_program("beq r1, 0, a\na:\nbeq r1, 0, b\nb:\nbeq r1, 0, c\nc:\nhalt").unwrap();
        let ids = assign_branch_ids(&p);
        let raw: Vec<u8> = ids.ids.values().map(|i| i.raw()).collect();
        assert_eq!(raw, vec![0, 1, 2]);
        assert!(ids.demoted.is_empty());
        assert!(assign_branch_ids(&parse_program("halt").unwrap()).ids.is_empty());
    }

    #[test]
    fn sixteenth_branch_wraps_and_is_demoted() {
        let mut src = String::new();
        for k in 0..16 {
            src.push_str(&format!("beq r1, 0, l{k}\nl{k}:\n"));
        }
        src.push_str("halt");
        let p = parse_program(&src).unwrap();
        let ids = assign_branch_ids(&p);
        assert_eq!(ids.ids[&15].raw(), 0);
        assert_eq!(ids.demoted, BTreeSet::from([15]));
        let m = annotate(&p, &AnnotationPolicy::default());
        assert_eq!(m.program.instructions[15].tags.branch_mark(), BranchMark::Invalid);
        assert!(matches!(m.program.instructions[14].tags.branch_mark(), BranchMark::Valid(_)));
    }

    #[test]
    fn diamond_marks() {
        let p = parse_program(
            "beq r1, 0, else\nli r2, 1\njmp join\nelse:\nli r2, 2\njoin:\nadd r3, r4, r4\nhalt",
        )
        .unwrap();
        let m = annotate(&p, &AnnotationPolicy::default());
        let t = &m.program.instructions;
        let id0 = BranchId::new(0).unwrap();
        assert_eq!(t[0].tags.branch_mark(), BranchMark::Valid(id0));
        assert_eq!(t[0].tags.dependency_mark(), DependencyMark::No);
        assert_eq!(t[1].tags.dependency_mark(), DependencyMark::Valid(id0));
        assert_eq!(t[4].tags.dependency_mark(), DependencyMark::No);
        assert!(!t[4].tags.bd_informed);
        assert!(t.iter().all(|i| !i.tags.fe_restricted));
    }

    #[test]
    fn fe_policies() {
        let src = ".secret k 0x100 8\nload r1, k\nbeq r1, 0, a\na:\nbeq r2, 0, b\nb:\nhalt";
        let p = parse_program(src).unwrap();
        let tainted = annotate(&p, &AnnotationPolicy::default());
        assert_eq!(tainted.fe_branches(), vec![1]);
        let all = annotate(&p, &AnnotationPolicy { fe: FeMarking::All });
        assert_eq!(all.fe_branches(), vec![1, 2]);
        let none = annotate(&p, &AnnotationPolicy { fe: FeMarking::None });
        assert!(none.fe_branches().is_empty());
        let span = annotate(&p, &AnnotationPolicy { fe: FeMarking::Span { from: 2, to: 3 } });
        assert_eq!(span.fe_branches(), vec![2]);
    }
}
