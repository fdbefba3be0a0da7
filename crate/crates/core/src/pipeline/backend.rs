//! Issue, execution, branch resolution (relaxing dependents of a correctly
//! predicted branch, squashing after a mispredicted one) and in-order commit.

use super::core::{Simulator, Stage};
use super::result::{CommitCategory, CommitRecord, SimError};
use crate::isa::{alu, branch_taken, Opcode, Operand, Program, WORD_BYTES};

fn overlaps(a: u64, b: u64) -> bool {
    a < b.wrapping_add(WORD_BYTES) && b < a.wrapping_add(WORD_BYTES)
}

impl Simulator<'_> {
    /// Entries waiting to become non-speculative are released
    /// once no older control flow is unresolved and no older trap is pending.
    pub(super) fn release_nonspeculative(&mut self) {
        let mut speculative = false;
        for pos in 0..self.rob.len() {
            let e = &mut self.rob[pos];
            if e.until_nonspec && e.backend_restricted && !speculative {
                e.backend_restricted = false;
                let (seq, index) = (e.seq, e.index);
                self.log("release", seq, index, "non-speculative");
            }
            let e = &self.rob[pos];
            if e.unresolved_control() || e.violation.is_some() || e.bad_jump.is_some() {
                speculative = true;
            }
        }
    }

    /// Value of a source register for the entry at `pos`, if available.
    fn reg_value(&self, pos: usize, k: usize) -> Option<u64> {
        let (r, prod) = self.rob[pos].srcs[k];
        if r.index() == 0 {
            return Some(0);
        }
        match prod.and_then(|s| self.find(s)) {
            Some(p) => (self.rob[p].stage == Stage::Done).then_some(self.rob[p].result),
            None => Some(self.regs[r.index()]),
        }
    }

    fn operand_value(&self, pos: usize, op: Option<Operand>) -> Option<u64> {
        match op {
            Some(Operand::Reg(r)) if r == crate::isa::Reg::ZERO => Some(0),
            Some(Operand::Reg(r)) => {
                let k = self.rob[pos].srcs.iter().position(|(s, _)| *s == r)?;
                self.reg_value(pos, k)
            }
            Some(Operand::Imm(v)) => Some(v as u64),
            None => Some(0),
        }
    }

    fn all_sources_ready(&self, pos: usize) -> bool {
        (0..self.rob[pos].srcs.len()).all(|k| self.reg_value(pos, k).is_some())
    }

    fn address(&self, pos: usize) -> Option<u64> {
        let mem = self.rob[pos].inst.mem.as_ref()?;
        let idx = match mem.index {
            Some(r) => self.operand_value(pos, Some(Operand::Reg(r)))?,
            None => 0,
        };
        Some(mem.address(idx))
    }

    /// Whether a load's memory dependences allow it to issue: every older
    /// store has a known address, none partially overlaps it, and the
    /// youngest exact match already has its data.
    fn load_may_issue(&self, pos: usize, addr: u64) -> bool {
        let mut matched = false;
        for o in self.rob.range(..pos).rev() {
            if o.inst.opcode != Opcode::Store {
                continue;
            }
            match o.addr {
                None => return false,
                Some(a) if a == addr => {
                    if !matched && o.stage == Stage::Waiting {
                        return false;
                    }
                    matched = true;
                }
                Some(a) if overlaps(a, addr) => return false,
                Some(_) => {}
            }
        }
        true
    }

    /// Store address generation runs ahead of the data so younger loads can
    /// disambiguate against it.
    fn generate_store_addresses(&mut self) {
        let mut speculative = false;
        for pos in 0..self.rob.len() {
            let spec_here = speculative;
            if self.rob[pos].unresolved_control() {
                speculative = true;
            }
            let e = &self.rob[pos];
            if e.inst.opcode != Opcode::Store
                || e.addr.is_some()
                || e.dispatch_cycle >= self.now
                || e.restricted
                || e.backend_restricted
                || (self.policy.stt_mode && spec_here && self.stt_blocked(pos))
            {
                continue;
            }
            if let Some(addr) = self.address(pos) {
                self.rob[pos].addr = Some(addr);
            }
        }
    }

    fn forwarded(&self, pos: usize, addr: u64) -> Option<u64> {
        self.rob
            .range(..pos)
            .rev()
            .find(|o| o.inst.opcode == Opcode::Store && o.addr == Some(addr))
            .map(|o| o.result)
    }

    pub(super) fn issue(&mut self) {
        self.generate_store_addresses();
        let mut issued = 0;
        let mut speculative = false;
        for pos in 0..self.rob.len() {
            if issued >= self.cfg.issue_width {
                break;
            }
            let spec_here = speculative;
            if self.rob[pos].unresolved_control() {
                speculative = true;
            }
            let e = &self.rob[pos];
            if e.stage != Stage::Waiting
                || e.dispatch_cycle >= self.now
                || e.restricted
                || e.backend_restricted
                || !self.all_sources_ready(pos)
            {
                continue;
            }
            if self.policy.stt_mode && spec_here && self.stt_blocked(pos) {
                continue;
            }
            let op = e.inst.opcode;
            let addr = self.address(pos);
            if op == Opcode::Load && !self.load_may_issue(pos, addr.unwrap()) {
                continue;
            }
            self.execute(pos, addr);
            issued += 1;
        }
    }

    /// Speculative-taint rule: a load-derived value may not form a load
    /// address or a control-flow condition while the consumer is speculative.
    fn stt_blocked(&self, pos: usize) -> bool {
        let e = &self.rob[pos];
        let derived = |r: crate::isa::Reg| {
            let Some(k) = e.srcs.iter().position(|(s, _)| *s == r) else {
                return false;
            };
            match e.srcs[k].1.and_then(|s| self.find(s)) {
                Some(p) => self.rob[p].load_derived,
                None => self.arch_derived[r.index()],
            }
        };
        match e.inst.opcode {
            Opcode::Load => e.inst.mem.as_ref().unwrap().index.is_some_and(derived),
            op if op.is_cond_branch() || op == Opcode::Jmpi => e.inst.uses().into_iter().any(derived),
            _ => false,
        }
    }

    fn execute(&mut self, pos: usize, addr: Option<u64>) {
        let now = self.now;
        let inst = self.rob[pos].inst.clone();
        let a = self.operand_value(pos, inst.src1).unwrap();
        let b = self.operand_value(pos, inst.src2).unwrap();
        let mut latency = self.cfg.alu_latency;
        let mut result = 0;
        let mut detail = String::new();
        if let Some(addr) = addr {
            if self.cfg.check_sandbox && self.p.region_at(addr, WORD_BYTES).is_none() {
                self.rob[pos].violation = Some(addr);
            }
            self.rob[pos].addr = Some(addr);
        }
        match inst.opcode {
            Opcode::Mul => {
                result = alu(inst.opcode, a, b);
                latency = self.cfg.mul_latency;
            }
            op if op.is_alu() => result = alu(op, a, b),
            Opcode::Li => result = a,
            Opcode::Load => {
                let addr = addr.unwrap();
                result = self
                    .forwarded(pos, addr)
                    .unwrap_or_else(|| self.memory.read_u64(addr));
                latency = self.cache.access(addr, now);
                self.events.loads_issued += 1;
                if latency == self.cfg.miss_latency {
                    self.events.cache_misses += 1;
                }
                detail = format!("addr={addr:#x} lat={latency}");
            }
            Opcode::Store => {
                result = a;
                // The line is requested for ownership when the store executes.
                self.cache.access(addr.unwrap(), now);
                detail = format!("addr={:#x}", addr.unwrap());
            }
            op if op.is_cond_branch() => {
                let t = branch_taken(op, a, b);
                let e = &mut self.rob[pos];
                e.taken = t;
                e.actual_next = Some(if t { inst.target.unwrap() } else { e.index + 1 });
            }
            Opcode::Jmp => self.rob[pos].actual_next = inst.target,
            Opcode::Jmpi => {
                let next = self.jump_index(a);
                let e = &mut self.rob[pos];
                if next.is_none() {
                    e.bad_jump = Some(a);
                }
                e.taken = true;
                e.actual_next = Some(next.unwrap_or(self.p.len()));
            }
            Opcode::Rdcycle => result = now,
            _ => {}
        }
        let e = &mut self.rob[pos];
        e.result = result;
        e.issue_cycle = now;
        e.stage = Stage::Executing {
            done_at: now + latency,
        };
        let (seq, index) = (e.seq, e.index);
        self.log("issue", seq, index, detail);
    }

    /// Finishes execution and resolves control flow, oldest first.
    pub(super) fn complete(&mut self) {
        let mut pos = 0;
        while pos < self.rob.len() {
            let e = &mut self.rob[pos];
            if let Stage::Executing { done_at } = e.stage {
                if done_at <= self.now {
                    e.stage = Stage::Done;
                    e.complete_cycle = self.now;
                    let (seq, index) = (e.seq, e.index);
                    self.log("complete", seq, index, "");
                    if self.rob[pos].actual_next.is_some() {
                        self.resolve(pos);
                    }
                }
            }
            pos += 1;
        }
    }

    fn resolve(&mut self, pos: usize) {
        let e = &mut self.rob[pos];
        e.resolved = true;
        let seq = e.seq;
        let index = e.index;
        let actual = e.actual_next.unwrap();
        let taken = e.taken;
        let predicted = e.predicted_next;
        let prediction = e.prediction;
        let restricts_younger = e.restricts_younger() && self.policy.restricts_backend();

        // Step 6: free the UBT slot and relax the entries waiting on it.
        if let Some(id) = e.in_ubt.take() {
            self.ubt[id.raw() as usize] = None;
            for o in self.rob.iter_mut() {
                if o.dependent_branch == Some((id, seq)) {
                    o.dependent_branch = None;
                    if o.restricted {
                        o.restricted = false;
                        o.relaxed = true;
                    }
                }
            }
            self.log("relax", seq, index, format!("id={}", id.raw()));
        }
        // Step 7: walk younger entries up to and including the next
        // instruction that restricts its own younger entries.
        if restricts_younger {
            for o in self.rob.range_mut(pos + 1..) {
                if !o.until_nonspec {
                    o.backend_restricted = false;
                }
                if o.restricts_younger() {
                    break;
                }
            }
        }

        match predicted {
            None => {
                if self.fetch_blocked_on == Some(seq) {
                    self.fetch_blocked_on = None;
                    self.fetch_pc = actual;
                    self.fetch_resume = self.now + 1;
                }
                self.log("resolve", seq, index, format!("next={actual} unblock"));
            }
            Some(p) if p != actual => {
                self.events.mispredicts += 1;
                self.log("resolve", seq, index, format!("next={actual} mispredict"));
                self.squash_after(seq);
                if let Some(pr) = prediction {
                    self.predictor.restore_history(pr.history);
                    self.predictor.push_history(taken);
                }
                self.fetch_pc = actual;
                self.fetch_resume = self.now + 1;
            }
            Some(_) => self.log("resolve", seq, index, format!("next={actual}")),
        }
    }

    /// Removes every entry younger than `seq`, frees their UBT slots, drops
    /// the fetch queue and rebuilds the rename map. Cache fills stay.
    pub(super) fn squash_after(&mut self, seq: u64) {
        while self.rob.back().is_some_and(|e| e.seq > seq) {
            let e = self.rob.pop_back().unwrap();
            if let Some(id) = e.in_ubt {
                self.ubt[id.raw() as usize] = None;
            }
            self.events.squashed += 1;
            self.log("squash", e.seq, e.index, "");
        }
        self.events.squashed += self.fetch_queue.len() as u64;
        self.fetch_queue.clear();
        self.fetch_blocked_on = None;
        self.fetch_stopped = false;
        if self.serialize_on.is_some_and(|s| s > seq) {
            self.serialize_on = None;
        }
        self.rename = [None; crate::isa::NUM_REGS];
        for e in &self.rob {
            if let Some(d) = e.inst.def() {
                self.rename[d.index()] = Some(e.seq);
            }
        }
    }

    pub(super) fn commit(&mut self) -> Result<(), SimError> {
        let mut n = 0;
        while n < self.cfg.commit_width {
            let Some(e) = self.rob.front() else {
                if n == 0 {
                    self.stalls.commit_rob_empty += 1;
                }
                break;
            };
            if e.stage != Stage::Done {
                if n == 0 {
                    if e.restricted || e.backend_restricted {
                        self.stalls.commit_head_restricted += 1;
                    } else {
                        self.stalls.commit_head_waiting += 1;
                    }
                }
                break;
            }
            let e = self.rob.pop_front().unwrap();
            if let Some(addr) = e.violation {
                return Err(SimError::SandboxViolation {
                    index: e.index,
                    addr,
                });
            }
            if let Some(pc) = e.bad_jump {
                return Err(SimError::BadJump { index: e.index, pc });
            }
            if let Some(d) = e.inst.def() {
                self.regs[d.index()] = e.result;
                self.arch_derived[d.index()] = e.load_derived;
                if self.rename[d.index()] == Some(e.seq) {
                    self.rename[d.index()] = None;
                }
            }
            match e.inst.opcode {
                Opcode::Store => self.memory.write_u64(e.addr.unwrap(), e.result),
                Opcode::Clflush => {
                    self.cache.flush(e.addr.unwrap());
                    if self.serialize_on == Some(e.seq) {
                        self.serialize_on = None;
                    }
                }
                Opcode::Halt => self.halted = true,
                Opcode::Jmpi if e.predicted_next.is_some() => {
                    self.predictor
                        .train_target(e.pc(), Program::pc_of(e.actual_next.unwrap()));
                }
                _ => {}
            }
            if let Some(pr) = e.prediction {
                let target = Program::pc_of(e.inst.target.unwrap_or(e.index + 1));
                self.predictor.train(pr.index, e.pc(), e.taken, target);
                self.events.predictor_updates += 1;
            }
            let category = if e.relaxed {
                CommitCategory::Relaxed
            } else if e.ever_restricted {
                CommitCategory::RemainedRestricted
            } else {
                CommitCategory::NotRestricted
            };
            self.breakdown.add(category);
            self.log("commit", e.seq, e.index, "");
            self.commits.push(CommitRecord {
                seq: e.seq,
                index: e.index,
                dispatch_cycle: e.dispatch_cycle,
                issue_cycle: e.issue_cycle,
                complete_cycle: e.complete_cycle,
                commit_cycle: self.now,
                category,
            });
            n += 1;
            if self.halted {
                break;
            }
        }
        Ok(())
    }
}
