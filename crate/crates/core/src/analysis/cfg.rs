use std::collections::BTreeSet;

use crate::isa::{Opcode, Program};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasicBlock {
    /// First instruction index.
    pub start: usize,
    /// One past the last instruction index.
    pub end: usize,
    pub succs: Vec<usize>,
    pub preds: Vec<usize>,
}

impl BasicBlock {
    pub fn instructions(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    pub fn terminator(&self) -> usize {
        self.end - 1
    }
}

/// Control-flow graph over maximal basic blocks. Node `exit()` is a synthetic
/// sink with no instructions; HALT, falling off the end and blocks that could
/// otherwise never reach it all get an edge to it.
#[derive(Clone, Debug)]
pub struct Cfg {
    pub blocks: Vec<BasicBlock>,
    /// Block id of every instruction.
    pub block_of: Vec<usize>,
    pub entry: usize,
    /// Blocks that were given an artificial exit edge because they loop forever.
    pub forced_exits: Vec<usize>,
}

impl Cfg {
    pub fn exit(&self) -> usize {
        self.blocks.len()
    }

    /// Number of nodes including the synthetic exit.
    pub fn node_count(&self) -> usize {
        self.blocks.len() + 1
    }

    pub fn succs(&self, node: usize) -> &[usize] {
        self.blocks.get(node).map_or(&[], |b| b.succs.as_slice())
    }

    pub fn preds(&self, node: usize) -> Vec<usize> {
        if node == self.exit() {
            (0..self.blocks.len())
                .filter(|b| self.blocks[*b].succs.contains(&node))
                .collect()
        } else {
            self.blocks[node].preds.clone()
        }
    }

    /// Edges between real blocks (the exit node's edges are not counted).
    pub fn edge_count(&self) -> usize {
        let exit = self.exit();
        self.blocks
            .iter()
            .map(|b| b.succs.iter().filter(|s| **s != exit).count())
            .sum()
    }

    pub fn has_back_edge(&self, from: usize, to: usize) -> bool {
        to <= from && self.blocks[from].succs.contains(&to)
    }
}

/// Instruction-level successors, with `p.len()` standing for "program exit".
pub fn instruction_successors(p: &Program, i: usize) -> Vec<usize> {
    let inst = &p.instructions[i];
    let n = p.len();
    let mut out = match inst.opcode {
        Opcode::Halt => vec![n],
        Opcode::Jmp => vec![inst.target.expect("jmp target")],
        Opcode::Jmpi => {
            let mut t = p.address_taken();
            t.push(n);
            t
        }
        op if op.is_cond_branch() => vec![i + 1, inst.target.expect("branch target")],
        _ => vec![i + 1],
    };
    for s in &mut out {
        if *s > n {
            *s = n;
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

pub fn build_cfg(p: &Program) -> Cfg {
    let n = p.len();
    if n == 0 {
        return Cfg {
            blocks: Vec::new(),
            block_of: Vec::new(),
            entry: 0,
            forced_exits: Vec::new(),
        };
    }
    let mut leaders = BTreeSet::new();
    leaders.insert(0);
    leaders.insert(p.entry.min(n - 1));
    leaders.extend(p.address_taken());
    for (i, inst) in p.instructions.iter().enumerate() {
        if let Some(t) = inst.target {
            if t < n {
                leaders.insert(t);
            }
        }
        if (inst.opcode.is_control() || inst.opcode == Opcode::Halt) && i + 1 < n {
            leaders.insert(i + 1);
        }
    }
    let starts: Vec<usize> = leaders.into_iter().collect();
    let mut block_of = vec![0; n];
    let mut blocks: Vec<BasicBlock> = starts
        .iter()
        .enumerate()
        .map(|(b, &start)| {
            let end = starts.get(b + 1).copied().unwrap_or(n);
            block_of[start..end].fill(b);
            BasicBlock {
                start,
                end,
                succs: Vec::new(),
                preds: Vec::new(),
            }
        })
        .collect();
    let exit = blocks.len();
    for b in 0..blocks.len() {
        let term = blocks[b].terminator();
        let mut succs: Vec<usize> = instruction_successors(p, term)
            .into_iter()
            .map(|s| if s >= n { exit } else { block_of[s] })
            .collect();
        succs.sort_unstable();
        succs.dedup();
        blocks[b].succs = succs;
    }

    // Blocks that cannot reach exit (infinite loops) get an exit edge so that
    // post-dominance is defined everywhere.
    let mut forced_exits = Vec::new();
    loop {
        let mut reaches = vec![false; exit + 1];
        reaches[exit] = true;
        let mut changed = true;
        while changed {
            changed = false;
            for b in 0..exit {
                if !reaches[b] && blocks[b].succs.iter().any(|s| reaches[*s]) {
                    reaches[b] = true;
                    changed = true;
                }
            }
        }
        // Pick the last non-reaching block: typically the loop's back-edge source.
        match (0..exit).rev().find(|b| !reaches[*b]) {
            Some(b) => {
                blocks[b].succs.push(exit);
                forced_exits.push(b);
            }
            None => break,
        }
    }

    for b in 0..exit {
        for s in blocks[b].succs.clone() {
            if s != exit {
                blocks[s].preds.push(b);
            }
        }
    }
    let entry = block_of[p.entry.min(n - 1)];
    Cfg {
        blocks,
        block_of,
        entry,
        forced_exits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_program;

    #[test]
    fn straight_line_is_one_block() {
        let cfg = build_cfg(&parse_program("li r1, 1\nadd r2, r1, r1\nhalt").unwrap());
        assert_eq!(cfg.blocks.len(), 1);
        assert_eq!(cfg.blocks[0].succs, vec![cfg.exit()]);
    }

    #[test]
    fn diamond() {
        let p = parse_program(
            "beq r1, 0, else\nli r2, 1\njmp join\nelse:\nli r2, 2\njoin:\nadd r3, r2, r2\nhalt",
        )
        .unwrap();
        let cfg = build_cfg(&p);
        assert_eq!(cfg.blocks.len(), 4);
        assert_eq!(cfg.edge_count(), 4);
    }

    #[test]
    fn loop_has_back_edge() {
        let p = parse_program("li r1, 4\ntop:\nsub r1, r1, 1\nbne r1, 0, top\nhalt").unwrap();
        let cfg = build_cfg(&p);
        let header = cfg.block_of[1];
        assert!(cfg.has_back_edge(header, header));
    }

    #[test]
    fn infinite_loop_gets_exit_edge() {
        let cfg = build_cfg(&parse_program("top:\nnop\njmp top").unwrap());
        assert_eq!(cfg.forced_exits, vec![0]);
        assert!(cfg.blocks[0].succs.contains(&cfg.exit()));
    }
}
