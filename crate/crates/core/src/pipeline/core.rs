//! Simulator state, the front end (fetch) and dispatch with the restriction
//! marking rules. Issue, completion, squash and commit live in `backend.rs`.

use std::collections::VecDeque;

use super::cache::Cache;
use super::config::SimConfig;
use super::result::{
    CommitBreakdown, CommitRecord, EventCounts, SimError, SimResult, StallBreakdown, TraceEvent,
};
use crate::analysis::MarkedProgram;
use crate::isa::{
    ArchState, BranchId, BranchMark, DependencyMark, Instruction, Memory, Opcode, Program, Reg,
    TagWord, NUM_REGS,
};
use crate::policies::PolicyConfig;
use crate::predictor::{Prediction, Predictor};

pub(super) struct Fetched {
    pub seq: u64,
    pub index: usize,
    pub cycle: u64,
    /// `None` when fetch stopped behind this instruction until it resolves.
    pub predicted_next: Option<usize>,
    pub prediction: Option<Prediction>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) enum Stage {
    Waiting,
    Executing { done_at: u64 },
    Done,
}

pub(super) struct Entry {
    pub seq: u64,
    pub index: usize,
    pub inst: Instruction,
    pub tags: TagWord,
    pub stage: Stage,
    pub dispatch_cycle: u64,
    pub issue_cycle: u64,
    pub complete_cycle: u64,
    /// Source registers with the in-flight producer each was renamed to.
    pub srcs: Vec<(Reg, Option<u64>)>,
    pub result: u64,

    pub restricted: bool,
    pub backend_restricted: bool,
    /// Released only once no older control flow is unresolved (`Res_BE` and
    /// `BD_invalid`); the step-7 walk leaves it alone.
    pub until_nonspec: bool,
    pub dependent_branch: Option<(BranchId, u64)>,
    pub ever_restricted: bool,
    pub relaxed: bool,
    /// Value derived from a load (speculative-taint policy).
    pub load_derived: bool,

    pub predicted_next: Option<usize>,
    pub prediction: Option<Prediction>,
    pub actual_next: Option<usize>,
    pub taken: bool,
    pub resolved: bool,
    pub in_ubt: Option<BranchId>,

    pub addr: Option<u64>,
    pub violation: Option<u64>,
    pub bad_jump: Option<u64>,
}

impl Entry {
    pub fn is_control(&self) -> bool {
        self.inst.opcode.is_cond_branch() || self.inst.opcode == Opcode::Jmpi
    }

    pub fn unresolved_control(&self) -> bool {
        self.is_control() && !self.resolved
    }

    /// Conditional `BR_invalid` branch or indirect jump: restricts every
    /// younger instruction until it resolves.
    pub fn restricts_younger(&self) -> bool {
        self.inst.opcode == Opcode::Jmpi
            || (self.inst.opcode.is_cond_branch()
                && self.tags.branch_mark() == BranchMark::Invalid)
    }

    pub fn pc(&self) -> u64 {
        Program::pc_of(self.index)
    }
}

pub struct Simulator<'a> {
    pub(super) p: &'a Program,
    pub(super) policy: PolicyConfig,
    pub(super) cfg: SimConfig,
    pub(super) predictor: Predictor,
    pub(super) cache: Cache,
    pub(super) regs: [u64; NUM_REGS],
    pub(super) arch_derived: [bool; NUM_REGS],
    pub(super) memory: Memory,
    pub(super) now: u64,
    pub(super) next_seq: u64,

    pub(super) fetch_pc: usize,
    pub(super) fetch_resume: u64,
    pub(super) fetch_blocked_on: Option<u64>,
    pub(super) fetch_stopped: bool,
    pub(super) fetch_queue: VecDeque<Fetched>,

    pub(super) rob: VecDeque<Entry>,
    pub(super) rename: [Option<u64>; NUM_REGS],
    pub(super) ubt: [Option<u64>; 16],
    pub(super) serialize_on: Option<u64>,

    pub(super) halted: bool,
    pub(super) breakdown: CommitBreakdown,
    pub(super) stalls: StallBreakdown,
    pub(super) events: EventCounts,
    pub(super) commits: Vec<CommitRecord>,
    pub(super) trace: Vec<TraceEvent>,
}

impl<'a> Simulator<'a> {
    pub fn new(
        p: &'a Program,
        policy: PolicyConfig,
        cfg: SimConfig,
        init: Memory,
        predictor: Option<Predictor>,
    ) -> Simulator<'a> {
        Simulator {
            p,
            policy,
            cfg,
            predictor: predictor.unwrap_or_else(|| Predictor::new(cfg.predictor)),
            cache: Cache::new(cfg.cache_lines, cfg.hit_latency, cfg.miss_latency),
            regs: [0; NUM_REGS],
            arch_derived: [false; NUM_REGS],
            memory: init,
            now: 0,
            next_seq: 0,
            fetch_pc: p.entry,
            fetch_resume: 0,
            fetch_blocked_on: None,
            fetch_stopped: false,
            fetch_queue: VecDeque::new(),
            rob: VecDeque::new(),
            rename: [None; NUM_REGS],
            ubt: [None; 16],
            serialize_on: None,
            halted: false,
            breakdown: CommitBreakdown::default(),
            stalls: StallBreakdown::default(),
            events: EventCounts::default(),
            commits: Vec::new(),
            trace: Vec::new(),
        }
    }

    /// Gives the simulator a pre-warmed cache, e.g. to model a shared one.
    pub fn with_cache(mut self, cache: Cache) -> Self {
        self.cache = cache;
        self
    }

    pub fn run(mut self) -> Result<SimResult, SimError> {
        if self.p.entry > self.p.len() {
            return Err(SimError::BadEntry(self.p.entry));
        }
        while !self.halted {
            if self.now >= self.cfg.max_cycles {
                return Err(SimError::CycleBudget(self.cfg.max_cycles));
            }
            self.complete();
            self.commit()?;
            if self.halted {
                break;
            }
            self.release_nonspeculative();
            self.issue();
            self.dispatch();
            self.fetch();
            self.now += 1;
        }
        let cycles = self.now + 1;
        Ok(SimResult {
            policy: self.policy.name,
            cycles,
            committed: self.breakdown.total(),
            commit_breakdown: self.breakdown,
            stalls: self.stalls,
            events: self.events,
            cache_lines: self.cache.resident(),
            state: ArchState {
                registers: self.regs,
                memory: self.memory,
                cycle_counter: cycles,
                halted: true,
            },
            commits: self.commits,
            trace: self.trace,
            predictor: self.predictor,
        })
    }

    pub(super) fn log(&mut self, stage: &'static str, seq: u64, index: usize, detail: impl Into<String>) {
        if self.cfg.trace {
            self.trace.push(TraceEvent {
                cycle: self.now,
                stage,
                seq,
                pc: Program::pc_of(index),
                detail: detail.into(),
            });
        }
    }

    pub(super) fn instruction(&self, index: usize) -> Instruction {
        self.p
            .instructions
            .get(index)
            .cloned()
            .unwrap_or_else(|| Instruction::new(Opcode::Halt))
    }

    fn fe_blocks(&self, inst: &Instruction) -> bool {
        !self.policy.use_branch_predictor || (self.policy.honor_fe_tags && inst.tags.fe_restricted)
    }

    /// Stops at front-end restricted control flow until it resolves;
    /// otherwise follows the predictor.
    fn fetch(&mut self) {
        if self.now < self.fetch_resume || self.fetch_blocked_on.is_some() || self.fetch_stopped {
            return;
        }
        for _ in 0..self.cfg.fetch_width {
            if self.fetch_queue.len() >= self.cfg.fetch_queue {
                break;
            }
            let index = self.fetch_pc;
            let inst = self.instruction(index);
            let seq = self.next_seq;
            self.next_seq += 1;
            self.events.fetched += 1;
            let pc = Program::pc_of(index);
            let mut predicted_next = Some(index + 1);
            let mut prediction = None;
            let mut end_group = false;
            match inst.opcode {
                Opcode::Halt => {
                    self.fetch_stopped = true;
                    end_group = true;
                }
                op if op.is_cond_branch() => {
                    if self.fe_blocks(&inst) {
                        predicted_next = None;
                    } else {
                        let pr = self.predictor.predict(pc);
                        self.events.predictor_queries += 1;
                        self.predictor.push_history(pr.taken);
                        if pr.taken {
                            predicted_next = inst.target;
                            end_group = true;
                        }
                        prediction = Some(pr);
                    }
                }
                Opcode::Jmp => {
                    if self.policy.use_branch_predictor {
                        predicted_next = inst.target;
                        end_group = true;
                    } else {
                        predicted_next = None;
                    }
                }
                Opcode::Jmpi => {
                    predicted_next = if self.fe_blocks(&inst) {
                        None
                    } else {
                        self.events.predictor_queries += 1;
                        self.predictor
                            .btb_lookup(pc)
                            .and_then(|t| self.jump_index(t))
                    };
                    end_group = true;
                }
                _ => {}
            }
            self.log(
                "fetch",
                seq,
                index,
                match predicted_next {
                    Some(n) => format!("next={n}"),
                    None => "block".to_string(),
                },
            );
            self.fetch_queue.push_back(Fetched {
                seq,
                index,
                cycle: self.now,
                predicted_next,
                prediction,
            });
            match predicted_next {
                Some(n) => self.fetch_pc = n,
                None => {
                    self.fetch_blocked_on = Some(seq);
                    break;
                }
            }
            if end_group {
                break;
            }
        }
    }

    /// Instruction index named by an indirect-jump target, including the
    /// one-past-the-end slot.
    pub(super) fn jump_index(&self, pc: u64) -> Option<usize> {
        self.p
            .index_of_pc(pc)
            .or_else(|| (pc == Program::pc_of(self.p.len())).then_some(self.p.len()))
    }

    fn ubt_occupancy(&self) -> usize {
        self.ubt.iter().filter(|s| s.is_some()).count()
    }

    fn effective_tags(&self, inst: &Instruction) -> TagWord {
        if self.policy.legacy_conservative {
            TagWord::LEGACY
        } else {
            inst.tags
        }
    }

    /// Sets the restricted bits, allocates UBT slots and stalls on slot
    /// conflicts.
    fn dispatch(&mut self) {
        let mut dispatched = 0;
        while dispatched < self.cfg.dispatch_width {
            let Some(f) = self.fetch_queue.front() else {
                if dispatched == 0 {
                    if self.fetch_blocked_on.is_some() {
                        self.stalls.fetch_blocked += 1;
                    } else {
                        self.stalls.fetch_queue_empty += 1;
                    }
                }
                break;
            };
            if f.cycle >= self.now {
                if dispatched == 0 {
                    self.stalls.fetch_queue_empty += 1;
                }
                break;
            }
            let inst = self.instruction(f.index);
            let tags = self.effective_tags(&inst);
            if self.serialize_on.is_some() {
                self.stalls.serialize += 1;
                break;
            }
            if self.rob.len() >= self.cfg.rob_size {
                self.stalls.rob_full += 1;
                break;
            }
            let count = |op: Opcode| self.rob.iter().filter(|e| e.inst.opcode == op).count();
            if (inst.opcode == Opcode::Load && count(Opcode::Load) >= self.cfg.lq_size)
                || (inst.opcode == Opcode::Store && count(Opcode::Store) >= self.cfg.sq_size)
            {
                self.stalls.lsq_full += 1;
                break;
            }
            let restricting = self.policy.restricts_backend();
            let ubt_id = match tags.branch_mark() {
                BranchMark::Valid(id) if restricting && inst.opcode.is_cond_branch() => Some(id),
                _ => None,
            };
            if let Some(id) = ubt_id {
                if self.ubt[id.raw() as usize].is_some() {
                    self.stalls.ubt_conflict += 1;
                    break;
                }
                if self.ubt_occupancy() >= self.cfg.ubt_size {
                    self.stalls.ubt_full += 1;
                    break;
                }
            }
            let f = self.fetch_queue.pop_front().unwrap();
            self.insert(f, inst, tags, ubt_id);
            dispatched += 1;
        }
    }

    fn insert(&mut self, f: Fetched, inst: Instruction, tags: TagWord, ubt_id: Option<BranchId>) {
        let srcs: Vec<(Reg, Option<u64>)> = inst
            .uses()
            .into_iter()
            .map(|r| (r, self.rename[r.index()]))
            .collect();
        let load_derived = inst.opcode == Opcode::Load
            || srcs.iter().any(|&(r, prod)| match prod.and_then(|s| self.find(s)) {
                Some(pos) => self.rob[pos].load_derived,
                None => self.arch_derived[r.index()],
            });
        let mut e = Entry {
            seq: f.seq,
            index: f.index,
            tags,
            stage: Stage::Waiting,
            dispatch_cycle: self.now,
            issue_cycle: 0,
            complete_cycle: 0,
            srcs,
            result: 0,
            restricted: false,
            backend_restricted: false,
            until_nonspec: false,
            dependent_branch: None,
            ever_restricted: false,
            relaxed: false,
            load_derived,
            predicted_next: f.predicted_next,
            prediction: f.prediction,
            actual_next: None,
            taken: false,
            resolved: false,
            in_ubt: None,
            addr: None,
            violation: None,
            bad_jump: None,
            inst,
        };
        if inst_is_jmp(&e.inst) && e.predicted_next.is_some() {
            // Direct jumps are resolved by decode.
            e.resolved = true;
        }
        if self.policy.restricts_backend() && e.inst.opcode != Opcode::Rdcycle {
            let older_unresolved = self.rob.iter().any(|o| o.unresolved_control());
            if tags.be_restricted && self.policy.honor_be_and_bd_tags {
                e.backend_restricted = true;
                e.until_nonspec = true;
            }
            match tags.dependency_mark() {
                DependencyMark::Valid(id) => {
                    if let Some(s) = self.ubt[id.raw() as usize] {
                        e.restricted = true;
                        e.dependent_branch = Some((id, s));
                    }
                }
                DependencyMark::Invalid if older_unresolved => {
                    e.backend_restricted = true;
                    e.until_nonspec = true;
                }
                _ => {}
            }
            if self
                .rob
                .iter()
                .any(|o| o.unresolved_control() && o.restricts_younger())
            {
                e.backend_restricted = true;
            }
            e.ever_restricted = e.restricted || e.backend_restricted;
        }
        if let Some(id) = ubt_id {
            self.ubt[id.raw() as usize] = Some(e.seq);
            e.in_ubt = Some(id);
        }
        if let Some(d) = e.inst.def() {
            self.rename[d.index()] = Some(e.seq);
        }
        if e.inst.opcode == Opcode::Clflush {
            self.serialize_on = Some(e.seq);
        }
        let detail = format!(
            "{}{}{}",
            e.inst.opcode.mnemonic(),
            if e.restricted { " restricted" } else { "" },
            if e.backend_restricted { " backend_restricted" } else { "" }
        );
        self.log("dispatch", e.seq, e.index, detail);
        self.rob.push_back(e);
    }

    /// ROB position of a sequence number.
    pub(super) fn find(&self, seq: u64) -> Option<usize> {
        self.rob.binary_search_by_key(&seq, |e| e.seq).ok()
    }
}

fn inst_is_jmp(i: &Instruction) -> bool {
    i.opcode == Opcode::Jmp
}

/// Runs an annotated program from its own initial memory with a fresh predictor.
pub fn run(m: &MarkedProgram, policy: &PolicyConfig, cfg: &SimConfig) -> Result<SimResult, SimError> {
    Simulator::new(&m.program, *policy, *cfg, m.program.initial_memory(), None).run()
}
