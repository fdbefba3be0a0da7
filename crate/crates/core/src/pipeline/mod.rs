//! Cycle-level out-of-order core with the restriction machinery: front-end
//! blocking on `Res_FE` control flow, the unresolved-branch table, per-entry
//! restricted / backend-restricted bits and their clearing rules, a load/store
//! queue that never lets loads bypass unknown store addresses, and a
//! timing-visible cache whose fills survive squashes.
//!
//! Each cycle runs, in order: completion and branch resolution, commit,
//! release of entries that became non-speculative, issue, dispatch, fetch.
//! A fetched instruction can dispatch the next cycle and issue the one after.

mod backend;
mod cache;
mod config;
mod core;
mod golden;
mod result;

pub use self::cache::{line_of, Cache, LINE_BYTES};
pub use self::config::{ConfigError, SimConfig};
pub use self::core::{run, Simulator};
pub use self::golden::{check_golden, timing_mask, GoldenError, GoldenReport, TimingMask};
pub use self::result::{
    CommitBreakdown, CommitCategory, CommitRecord, EventCounts, SimError, SimResult,
    StallBreakdown, TraceEvent,
};
