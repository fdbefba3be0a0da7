//! The 11-bit per-instruction restriction word.
//!
//! Bit layout, least significant first:
//!
//! | bits | field                 |
//! |------|-----------------------|
//! | 0    | front-end restricted  |
//! | 1    | back-end restricted   |
//! | 2    | bd informed           |
//! | 3-6  | dependent branch id   |
//! | 7-10 | branch id             |
//!
//! Id value 15 is the INVALID sentinel, so 0..=14 are usable static ids.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Number of bits in an encoded [`TagWord`].
pub const TAG_BITS: u32 = 11;

/// A 4-bit static branch identifier. `BranchId::INVALID` (15) means "not known".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BranchId(u8);

impl BranchId {
    pub const INVALID: BranchId = BranchId(15);
    /// Number of usable (non-sentinel) ids.
    pub const USABLE: u8 = 15;

    /// Builds an id from the low 4 bits of `raw`.
    pub fn new(raw: u8) -> Option<BranchId> {
        (raw < 16).then_some(BranchId(raw))
    }

    pub fn raw(self) -> u8 {
        self.0
    }

    pub fn is_valid(self) -> bool {
        self.0 != 15
    }
}

impl Default for BranchId {
    fn default() -> Self {
        BranchId::INVALID
    }
}

impl fmt::Display for BranchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Compiler-supplied speculation restrictions and branch dependencies for one instruction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TagWord {
    pub fe_restricted: bool,
    pub be_restricted: bool,
    pub bd_informed: bool,
    pub dependent_branch_id: BranchId,
    pub branch_id: BranchId,
}

/// How a control-flow instruction restricts younger instructions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchMark {
    /// Restricts only the instructions that name it as their dependent branch.
    Valid(BranchId),
    /// Restricts every younger instruction until it resolves.
    Invalid,
    /// Restricts nothing.
    No,
}

/// What an instruction declares about its own branch dependency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DependencyMark {
    /// Depends on the most recent instance of the given static branch.
    Valid(BranchId),
    /// Unknown: treat as dependent on every older unresolved branch.
    Invalid,
    /// Independent of all unresolved branches.
    No,
}

impl TagWord {
    /// Tags of an instruction no compiler has looked at.
    pub const LEGACY: TagWord = TagWord {
        fe_restricted: false,
        be_restricted: false,
        bd_informed: false,
        dependent_branch_id: BranchId::INVALID,
        branch_id: BranchId::INVALID,
    };

    pub fn encode(self) -> u16 {
        (self.fe_restricted as u16)
            | (self.be_restricted as u16) << 1
            | (self.bd_informed as u16) << 2
            | (self.dependent_branch_id.0 as u16) << 3
            | (self.branch_id.0 as u16) << 7
    }

    /// Inverse of [`TagWord::encode`]. Bits above bit 10 are ignored.
    pub fn decode(word: u16) -> TagWord {
        TagWord {
            fe_restricted: word & 1 != 0,
            be_restricted: word & 2 != 0,
            bd_informed: word & 4 != 0,
            dependent_branch_id: BranchId(((word >> 3) & 0xf) as u8),
            branch_id: BranchId(((word >> 7) & 0xf) as u8),
        }
    }

    pub fn is_legacy(&self) -> bool {
        *self == TagWord::LEGACY
    }

    /// Branch marking: an INVALID id is `BR_invalid` whatever the informed bit says.
    pub fn branch_mark(&self) -> BranchMark {
        if !self.branch_id.is_valid() {
            BranchMark::Invalid
        } else if self.bd_informed {
            BranchMark::Valid(self.branch_id)
        } else {
            BranchMark::No
        }
    }

    /// Dependency marking. The informed bit is shared with the branch marking,
    /// so a `BR_valid` branch that depends on nothing carries its own id as
    /// dependent id; that reads as `BD_no` because the UBT never holds an older
    /// live instance of the same static branch when a new one is dispatched.
    pub fn dependency_mark(&self) -> DependencyMark {
        if !self.bd_informed {
            DependencyMark::No
        } else if !self.dependent_branch_id.is_valid() {
            DependencyMark::Invalid
        } else if self.branch_id.is_valid() && self.dependent_branch_id == self.branch_id {
            DependencyMark::No
        } else {
            DependencyMark::Valid(self.dependent_branch_id)
        }
    }

    /// Renders the bracketed assembly suffix, or `None` for legacy tags.
    pub fn suffix(&self) -> Option<String> {
        if self.is_legacy() {
            return None;
        }
        let mut parts = Vec::new();
        if self.fe_restricted {
            parts.push("fe".to_string());
        }
        if self.be_restricted {
            parts.push("be".to_string());
        }
        if self.bd_informed {
            parts.push("bdi".to_string());
        }
        if self.dependent_branch_id.is_valid() {
            parts.push(format!("dep={}", self.dependent_branch_id));
        }
        if self.branch_id.is_valid() {
            parts.push(format!("bid={}", self.branch_id));
        }
        Some(format!("[{}]", parts.join(" ")))
    }
}
