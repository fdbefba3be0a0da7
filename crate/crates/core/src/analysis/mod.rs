//! The compiler side: control and data dependence of every conditional
//! branch, static BranchIDs, secret-taint of branch conditions, and the pass
//! that writes all of it into the per-instruction tag words.

mod annotate;
mod cfg;
mod defuse;
mod deps;
mod postdom;
mod taint;

pub use annotate::{
    analyze, annotate, assign_branch_ids, Analysis, AnnotationPolicy, BranchIds, FeMarking,
    MarkedProgram,
};
pub use cfg::{build_cfg, instruction_successors, BasicBlock, Cfg};
pub use defuse::{def_use, direct_dependents, may_alias, DefUse};
pub use deps::{
    backward_distance, branch_dependents_traversal, control_dependents, dependency_result,
    DependencyResult,
};
pub use postdom::{immediate_postdominators, postdominators};
pub use taint::{taint_secret_branches, TaintResult};
