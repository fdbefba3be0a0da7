//! Immediate post-dominators, computed as dominators of the reversed CFG with
//! the iterative bit-set formulation.

use std::collections::BTreeSet;

use super::cfg::Cfg;

#[derive(Clone, Debug, PartialEq, Eq)]
struct BitSet(Vec<u64>);

impl BitSet {
    fn full(n: usize) -> BitSet {
        let mut v = vec![u64::MAX; n.div_ceil(64)];
        if !n.is_multiple_of(64) {
            *v.last_mut().unwrap() = (1u64 << (n % 64)) - 1;
        }
        BitSet(v)
    }

    fn single(n: usize, x: usize) -> BitSet {
        let mut s = BitSet(vec![0; n.div_ceil(64)]);
        s.insert(x);
        s
    }

    fn insert(&mut self, x: usize) {
        self.0[x / 64] |= 1 << (x % 64);
    }

    fn contains(&self, x: usize) -> bool {
        self.0[x / 64] >> (x % 64) & 1 == 1
    }

    fn intersect(&mut self, other: &BitSet) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a &= b;
        }
    }

    fn count(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }
}

/// Post-dominator sets for every node (blocks plus exit).
pub fn postdominators(cfg: &Cfg) -> Vec<BTreeSet<usize>> {
    let sets = postdom_sets(cfg);
    let n = cfg.node_count();
    sets.iter()
        .map(|s| (0..n).filter(|x| s.contains(*x)).collect())
        .collect()
}

fn postdom_sets(cfg: &Cfg) -> Vec<BitSet> {
    let n = cfg.node_count();
    let exit = cfg.exit();
    let mut pdom: Vec<BitSet> = (0..n)
        .map(|b| {
            if b == exit {
                BitSet::single(n, exit)
            } else {
                BitSet::full(n)
            }
        })
        .collect();
    let mut changed = true;
    while changed {
        changed = false;
        for b in (0..exit).rev() {
            let mut acc = BitSet::full(n);
            for s in cfg.succs(b) {
                acc.intersect(&pdom[*s]);
            }
            acc.insert(b);
            if acc != pdom[b] {
                pdom[b] = acc;
                changed = true;
            }
        }
    }
    pdom
}

/// `ipdom[b]` for every block; the exit node maps to `None`.
pub fn immediate_postdominators(cfg: &Cfg) -> Vec<Option<usize>> {
    let n = cfg.node_count();
    let pdom = postdom_sets(cfg);
    (0..n)
        .map(|b| {
            let own = pdom[b].count();
            // Post-dominators form a chain; the immediate one has exactly one fewer.
            (0..n).find(|&d| d != b && pdom[b].contains(d) && pdom[d].count() + 1 == own)
        })
        .collect()
}
