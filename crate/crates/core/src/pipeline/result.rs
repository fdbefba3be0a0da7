use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::isa::ArchState;
use crate::policies::PolicyName;
use crate::predictor::Predictor;

/// How a committed instruction fared with respect to restriction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitCategory {
    /// Restricted at dispatch and released when its dependent branch resolved.
    Relaxed,
    /// Restricted at dispatch and released only once non-speculative.
    RemainedRestricted,
    NotRestricted,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CommitBreakdown {
    pub relaxed: u64,
    pub remained_restricted: u64,
    pub not_restricted: u64,
}

impl CommitBreakdown {
    pub fn total(&self) -> u64 {
        self.relaxed + self.remained_restricted + self.not_restricted
    }

    pub(crate) fn add(&mut self, c: CommitCategory) {
        match c {
            CommitCategory::Relaxed => self.relaxed += 1,
            CommitCategory::RemainedRestricted => self.remained_restricted += 1,
            CommitCategory::NotRestricted => self.not_restricted += 1,
        }
    }
}

/// Cycle counts by reason. Dispatch counters record why dispatch stopped in a
/// cycle; commit counters record why nothing retired in a cycle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StallBreakdown {
    pub fetch_blocked: u64,
    pub fetch_queue_empty: u64,
    pub rob_full: u64,
    pub lsq_full: u64,
    pub ubt_conflict: u64,
    pub ubt_full: u64,
    pub serialize: u64,
    pub commit_rob_empty: u64,
    pub commit_head_restricted: u64,
    pub commit_head_waiting: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CommitRecord {
    pub seq: u64,
    pub index: usize,
    pub dispatch_cycle: u64,
    pub issue_cycle: u64,
    pub complete_cycle: u64,
    pub commit_cycle: u64,
    pub category: CommitCategory,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub cycle: u64,
    pub stage: &'static str,
    pub seq: u64,
    pub pc: u64,
    pub detail: String,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{:#x},{}",
            self.cycle, self.stage, self.seq, self.pc, self.detail
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EventCounts {
    pub fetched: u64,
    pub squashed: u64,
    pub mispredicts: u64,
    pub predictor_queries: u64,
    pub predictor_updates: u64,
    pub loads_issued: u64,
    pub cache_misses: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimResult {
    pub policy: PolicyName,
    pub cycles: u64,
    pub committed: u64,
    pub commit_breakdown: CommitBreakdown,
    pub stalls: StallBreakdown,
    pub events: EventCounts,
    /// Byte addresses of the cache lines resident at the end.
    pub cache_lines: BTreeSet<u64>,
    #[serde(skip)]
    pub state: ArchState,
    #[serde(skip)]
    pub commits: Vec<CommitRecord>,
    #[serde(skip)]
    pub trace: Vec<TraceEvent>,
    #[serde(skip)]
    pub predictor: Predictor,
}

impl SimResult {
    /// Instruction indices in commit order.
    pub fn commit_indices(&self) -> Vec<usize> {
        self.commits.iter().map(|c| c.index).collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("cycle budget of {0} exceeded")]
    CycleBudget(u64),
    #[error("instruction {index}: access to {addr:#x} outside every declared region")]
    SandboxViolation { index: usize, addr: u64 },
    #[error("instruction {index}: indirect jump to {pc:#x} is not an instruction")]
    BadJump { index: usize, pc: u64 },
    #[error("entry point {0} is outside the program")]
    BadEntry(usize),
}
