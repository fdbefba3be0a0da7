//! Branch dependents: the worklist traversal seeded with control dependents and
//! closed under direct (def-use and may-alias) dependencies.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::cfg::Cfg;
use super::defuse::{direct_dependents, DefUse};
use crate::isa::Program;

/// Instructions in blocks on some path from the branch's block to its
/// immediate post-dominator, both ends exclusive. A block re-entered through a
/// loop back edge (including the branch's own) counts.
pub fn control_dependents(
    br: usize,
    p: &Program,
    cfg: &Cfg,
    ipdom: &[Option<usize>],
) -> BTreeSet<usize> {
    let from = cfg.block_of[br];
    let stop = ipdom[from];
    let exit = cfg.exit();
    let mut seen = vec![false; cfg.node_count()];
    let mut stack: Vec<usize> = cfg.succs(from).to_vec();
    let mut out = BTreeSet::new();
    while let Some(b) = stack.pop() {
        if b == exit || Some(b) == stop || seen[b] {
            continue;
        }
        seen[b] = true;
        out.extend(cfg.blocks[b].instructions());
        stack.extend_from_slice(cfg.succs(b));
    }
    debug_assert!(out.iter().all(|i| *i < p.len()));
    out
}

/// Worklist fixpoint starting from the control dependents of `br`.
///
/// The returned set contains the control dependents themselves as well as
/// everything reached from them through direct dependencies.
pub fn branch_dependents_traversal(
    control: &BTreeSet<usize>,
    p: &Program,
    du: &DefUse,
) -> BTreeSet<usize> {
    let mut dependents = control.clone();
    let mut working: Vec<usize> = control.iter().rev().copied().collect();
    let mut processed = BTreeSet::new();
    while let Some(inst) = working.pop() {
        if !processed.insert(inst) {
            continue;
        }
        for dep in direct_dependents(p, du, inst) {
            dependents.insert(dep);
            if !processed.contains(&dep) {
                working.push(dep);
            }
        }
    }
    dependents
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct DependencyResult {
    pub control_dependents: BTreeMap<usize, BTreeSet<usize>>,
    pub dependents: BTreeMap<usize, BTreeSet<usize>>,
    /// Per instruction: the branch whose latest dynamic instance it depends on.
    pub most_recent_dependent_branch: Vec<Option<usize>>,
    /// Instructions whose dependence cannot be expressed by one branch.
    pub multi_dep: BTreeSet<usize>,
}

impl DependencyResult {
    /// Branches whose dependent set contains `i`.
    pub fn branches_of(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.dependents
            .iter()
            .filter(move |(_, d)| d.contains(&i))
            .map(|(b, _)| *b)
    }
}

/// How far back, walking program order cyclically, branch `b` last executed
/// before instruction `i` in a straight pass or via a loop back edge.
pub fn backward_distance(b: usize, i: usize, n: usize) -> usize {
    if b < i {
        i - b
    } else {
        i + n - b
    }
}

pub fn dependency_result(p: &Program, cfg: &Cfg, ipdom: &[Option<usize>], du: &DefUse) -> DependencyResult {
    let mut res = DependencyResult {
        most_recent_dependent_branch: vec![None; p.len()],
        ..Default::default()
    };
    for br in p.cond_branches() {
        let cd = control_dependents(br, p, cfg, ipdom);
        let deps = branch_dependents_traversal(&cd, p, du);
        res.control_dependents.insert(br, cd);
        res.dependents.insert(br, deps);
    }
    let n = p.len();
    for i in 0..n {
        let candidates: Vec<usize> = res.branches_of(i).collect();
        let Some(&best) = candidates
            .iter()
            .min_by_key(|b| (backward_distance(**b, i, n), usize::MAX - **b))
        else {
            continue;
        };
        res.most_recent_dependent_branch[i] = Some(best);
        // Naming one branch is enough when every other candidate already
        // governs that branch (so it cannot resolve first).
        let covered = candidates
            .iter()
            .all(|&b| b == best || res.dependents[&b].contains(&best));
        if !covered {
            res.multi_dep.insert(i);
        }
    }
    res
}
