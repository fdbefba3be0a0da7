//! Shared test support: a seeded random program generator and brute-force
//! reference implementations of the dependence analysis.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use speccontrol::isa::{parse_program, Opcode, Operand, Program, INST_BYTES};

pub const MAX_INSTS: usize = 60;
pub const MAX_BRANCHES: usize = 6;

const HEADER: &str = "\
.region data 0x1000 512 public
.region aux 0x4000 64 public
.secret sec 0x8000 64
";

/// Emits structured random programs: straight-line ALU and memory code,
/// forward if/else, counted loops (counters in r13/r14, bodies never write
/// them) and a two-way computed JMPI. Every program terminates.
pub struct ProgramGen {
    rng: ChaCha8Rng,
    lines: Vec<String>,
    emitted: usize,
    budget: usize,
    branches_left: usize,
    labels: usize,
}

impl ProgramGen {
    fn new(seed: u64) -> ProgramGen {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let budget = rng.gen_range(12..MAX_INSTS);
        ProgramGen {
            rng,
            lines: Vec::new(),
            emitted: 0,
            budget,
            branches_left: MAX_BRANCHES,
            labels: 0,
        }
    }

    fn room(&self) -> usize {
        self.budget.saturating_sub(self.emitted)
    }

    fn inst(&mut self, s: String) {
        self.lines.push(format!("    {s}"));
        self.emitted += 1;
    }

    fn label(&mut self) -> String {
        self.labels += 1;
        format!("L{}", self.labels)
    }

    fn place(&mut self, l: &str) {
        self.lines.push(format!("{l}:"));
    }

    fn reg(&mut self) -> String {
        format!("r{}", self.rng.gen_range(1..=11))
    }

    /// A source register, occasionally r0 or a live loop counter.
    fn src(&mut self, loop_depth: usize) -> String {
        match self.rng.gen_range(0..12) {
            0 => "r0".into(),
            1 if loop_depth > 0 => format!("r{}", 12 + self.rng.gen_range(1..=loop_depth)),
            _ => self.reg(),
        }
    }

    fn operand(&mut self, loop_depth: usize) -> String {
        if self.rng.gen_bool(0.4) {
            self.rng.gen_range(-8i64..64).to_string()
        } else {
            self.src(loop_depth)
        }
    }

    fn simple(&mut self, loop_depth: usize) {
        let two = self.room() >= 2;
        match self.rng.gen_range(0..10) {
            0 => {
                let (d, v) = (self.reg(), self.rng.gen_range(-100i64..1000));
                self.inst(format!("li {d}, {v}"));
            }
            1 | 2 if two => {
                let (d, s) = (self.reg(), self.src(loop_depth));
                self.inst(format!("and r15, {s}, 0x1f8"));
                self.inst(format!("load {d}, data(r15)"));
            }
            3 => {
                let d = self.reg();
                let (region, k) = if self.rng.gen_bool(0.5) { ("aux", 8) } else { ("sec", 8) };
                let off = k * self.rng.gen_range(0..8);
                self.inst(format!("load {d}, {region}+{off}"));
            }
            4 if two => {
                let (v, s) = (self.src(loop_depth), self.src(loop_depth));
                self.inst(format!("and r15, {s}, 0x1f8"));
                self.inst(format!("store {v}, data(r15)"));
            }
            5 => {
                let v = self.src(loop_depth);
                let off = 8 * self.rng.gen_range(0..8);
                self.inst(format!("store {v}, aux+{off}"));
            }
            6 => {
                if self.rng.gen_bool(0.5) {
                    self.inst("clflush aux".into());
                } else {
                    self.inst("clflush data(r15)".into());
                }
            }
            _ => {
                let op = *["add", "sub", "mul", "and", "xor", "shl"].choose(&mut self.rng).unwrap();
                let (d, a) = (self.reg(), self.src(loop_depth));
                let b = if op == "shl" {
                    self.rng.gen_range(0..8).to_string()
                } else {
                    self.operand(loop_depth)
                };
                self.inst(format!("{op} {d}, {a}, {b}"));
            }
        }
    }

    fn block(&mut self, loop_depth: usize, max_stmts: usize) {
        let n = self.rng.gen_range(1..=max_stmts);
        for _ in 0..n {
            if self.room() == 0 {
                return;
            }
            self.stmt(loop_depth);
        }
    }

    fn stmt(&mut self, loop_depth: usize) {
        let room = self.room();
        let choice = self.rng.gen_range(0..10);
        if self.branches_left > 0 {
            if choice == 0 && room >= 5 {
                return self.if_else(loop_depth);
            }
            if choice == 1 && room >= 6 && loop_depth < 2 {
                return self.counted_loop(loop_depth);
            }
            if choice == 2 && room >= 9 {
                return self.jmpi(loop_depth);
            }
        }
        self.simple(loop_depth);
    }

    fn if_else(&mut self, loop_depth: usize) {
        self.branches_left -= 1;
        let op = *["beq", "bne", "blt"].choose(&mut self.rng).unwrap();
        let (a, b) = (self.src(loop_depth), self.operand(loop_depth));
        let (skip, join) = (self.label(), self.label());
        self.inst(format!("{op} {a}, {b}, {skip}"));
        let with_else = self.rng.gen_bool(0.5);
        self.budget -= with_else as usize;
        self.block(loop_depth, 3);
        self.budget += with_else as usize;
        if with_else {
            self.inst(format!("jmp {join}"));
            self.place(&skip);
            self.block(loop_depth, 3);
            self.place(&join);
        } else {
            self.place(&skip);
        }
    }

    fn counted_loop(&mut self, loop_depth: usize) {
        self.branches_left -= 1;
        let ctr = format!("r{}", 13 + loop_depth);
        let trips = self.rng.gen_range(1..=4);
        let top = self.label();
        self.inst(format!("li {ctr}, 0"));
        self.place(&top);
        self.budget -= 2;
        self.block(loop_depth + 1, 4);
        self.budget += 2;
        self.inst(format!("add {ctr}, {ctr}, 1"));
        self.inst(format!("bne {ctr}, {trips}, {top}"));
    }

    fn jmpi(&mut self, loop_depth: usize) {
        self.branches_left -= 1;
        let s = self.src(loop_depth);
        let (la, lb, end) = (self.label(), self.label(), self.label());
        self.inst(format!("and r15, {s}, 1"));
        self.inst("shl r15, r15, 3".into());
        self.inst(format!("li r12, {la}"));
        self.inst("add r12, r12, r15".into());
        // Keeps the second arm address-taken, hence a known JMPI target.
        self.inst(format!("li r15, {lb}"));
        self.inst("jmpi r12".into());
        self.place(&la);
        let (d, a, b) = (self.reg(), self.src(loop_depth), self.operand(loop_depth));
        self.inst(format!("add {d}, {a}, {b}"));
        self.inst(format!("jmp {end}"));
        self.place(&lb);
        let (d, a, b) = (self.reg(), self.src(loop_depth), self.operand(loop_depth));
        self.inst(format!("xor {d}, {a}, {b}"));
        self.place(&end);
    }

    fn source(mut self) -> String {
        let mut out = String::from(HEADER);
        for _ in 0..self.rng.gen_range(2..8) {
            let off = 8 * self.rng.gen_range(0..64);
            let v: u32 = self.rng.gen();
            out.push_str(&format!(".word data+{off} {v}\n"));
        }
        out.push_str(&format!(".word aux+8 {}\n", self.rng.gen_range(0..100)));
        out.push_str(&format!(".word sec {}\n", self.rng.gen_range(0..256)));
        for _ in 0..self.rng.gen_range(1..4) {
            if self.room() == 0 {
                break;
            }
            let (d, v) = (self.reg(), self.rng.gen_range(0..500));
            self.inst(format!("li {d}, {v}"));
        }
        while self.room() > 0 {
            self.stmt(0);
        }
        self.inst("halt".into());
        for l in &self.lines {
            out.push_str(l);
            out.push('\n');
        }
        out
    }
}

/// Assembly source of the random program for `seed`.
pub fn random_source(seed: u64) -> String {
    ProgramGen::new(seed).source()
}

pub fn random_program(seed: u64) -> Program {
    let src = random_source(seed);
    parse_program(&src).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{src}"))
}

/// Number of control transfers a program may choose between (conditional
/// branches and indirect jumps).
pub fn branch_count(p: &Program) -> usize {
    p.instructions
        .iter()
        .filter(|i| i.opcode.is_cond_branch() || i.opcode == Opcode::Jmpi)
        .count()
}

// Reference analysis. Everything below works on single instructions with the
// exit as node `n`, and answers each question by graph search rather than by
// dataflow.

fn jump_targets(p: &Program) -> Vec<usize> {
    let labelled: BTreeSet<usize> = p.labels.values().copied().collect();
    p.instructions
        .iter()
        .filter(|i| i.opcode == Opcode::Li)
        .filter_map(|i| match i.src1 {
            Some(Operand::Imm(v)) if v >= 0 && (v as u64).is_multiple_of(INST_BYTES) => {
                Some((v as u64 / INST_BYTES) as usize)
            }
            _ => None,
        })
        .filter(|t| labelled.contains(t))
        .collect()
}

pub fn successors(p: &Program, i: usize) -> Vec<usize> {
    let n = p.len();
    if i >= n {
        return Vec::new();
    }
    let inst = &p.instructions[i];
    let mut out = match inst.opcode {
        Opcode::Halt => vec![n],
        Opcode::Jmp => vec![inst.target.unwrap()],
        Opcode::Jmpi => {
            let mut t = jump_targets(p);
            t.push(n);
            t
        }
        op if op.is_cond_branch() => vec![i + 1, inst.target.unwrap()],
        _ => vec![i + 1],
    };
    for s in &mut out {
        *s = (*s).min(n);
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Nodes reachable from the successors of `from` without entering `avoid`.
fn reachable(p: &Program, from: usize, avoid: Option<usize>) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut stack = successors(p, from);
    while let Some(x) = stack.pop() {
        if Some(x) == avoid || !seen.insert(x) {
            continue;
        }
        stack.extend(successors(p, x));
    }
    seen
}

/// `x` strictly post-dominates `i` when every path from `i` to the exit
/// passes through `x`, i.e. the exit is unreachable once `x` is removed.
pub fn strictly_postdominates(p: &Program, x: usize, i: usize) -> bool {
    x != i && !reachable(p, i, Some(x)).contains(&p.len())
}

/// Nearest strict post-dominator, or `None` when only the exit qualifies.
pub fn ipdom(p: &Program, i: usize) -> Option<usize> {
    let pd: Vec<usize> = (0..p.len()).filter(|&x| strictly_postdominates(p, x, i)).collect();
    pd.iter()
        .copied()
        .find(|&x| pd.iter().all(|&y| y == x || strictly_postdominates(p, y, x)))
}

/// Instructions on some path from the branch to its immediate
/// post-dominator, both exclusive.
pub fn control_dependents(p: &Program, br: usize) -> BTreeSet<usize> {
    let stop = ipdom(p, br).unwrap_or(p.len());
    let mut r = reachable(p, br, Some(stop));
    r.remove(&p.len());
    r
}

/// Uses reached by the definition at `d` along some path without an
/// intervening redefinition.
pub fn uses_of(p: &Program, d: usize) -> BTreeSet<usize> {
    let Some(r) = p.instructions[d].def() else {
        return BTreeSet::new();
    };
    let n = p.len();
    let mut out = BTreeSet::new();
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<usize> = successors(p, d).into();
    while let Some(j) = queue.pop_front() {
        if j == n || !seen.insert(j) {
            continue;
        }
        let inst = &p.instructions[j];
        if inst.uses().contains(&r) {
            out.insert(j);
        }
        if inst.def() != Some(r) {
            queue.extend(successors(p, j));
        }
    }
    out
}

/// Accesses are disjoint only if both are constant and fall in different
/// declared regions.
pub fn accesses_may_alias(p: &Program, a: usize, b: usize) -> bool {
    let region_of = |i: usize| {
        let m = p.instructions[i].mem.as_ref().unwrap();
        let addr = m.constant()?;
        p.regions.iter().position(|r| r.base <= addr && addr < r.base + r.size)
    };
    match (region_of(a), region_of(b)) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    }
}

fn direct_edges(p: &Program, i: usize) -> BTreeSet<usize> {
    let mut out = uses_of(p, i);
    if p.instructions[i].opcode == Opcode::Store {
        out.extend(
            (0..p.len())
                .filter(|&j| p.instructions[j].opcode == Opcode::Load && accesses_may_alias(p, i, j)),
        );
    }
    out
}

/// Transitive closure from the branch's control dependents over def-use and
/// store-to-load alias edges. Control-dependence edges are taken only from
/// the branch under analysis.
pub fn dependents_closure(p: &Program, br: usize) -> BTreeSet<usize> {
    let edges: Vec<BTreeSet<usize>> = (0..p.len()).map(|i| direct_edges(p, i)).collect();
    let mut out = control_dependents(p, br);
    let mut stack: Vec<usize> = out.iter().copied().collect();
    while let Some(i) = stack.pop() {
        for &j in &edges[i] {
            if out.insert(j) {
                stack.push(j);
            }
        }
    }
    out
}
