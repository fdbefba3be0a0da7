//! Named restriction policies compared by the simulator, and the tag
//! manipulations used to model legacy binaries and marking variants.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{annotate, AnnotationPolicy, FeMarking, MarkedProgram};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    Unprotected,
    SecureBaseline,
    Conservative,
    SttLike,
    SpecControl,
}

impl PolicyName {
    pub const ALL: [PolicyName; 5] = [
        PolicyName::Unprotected,
        PolicyName::SpecControl,
        PolicyName::SttLike,
        PolicyName::Conservative,
        PolicyName::SecureBaseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::Unprotected => "unprotected",
            PolicyName::SecureBaseline => "secure_baseline",
            PolicyName::Conservative => "conservative",
            PolicyName::SttLike => "stt_like",
            PolicyName::SpecControl => "speccontrol",
        }
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown policy `{0}` (expected unprotected, secure_baseline, conservative, stt_like or speccontrol)")]
pub struct UnknownPolicy(pub String);

impl FromStr for PolicyName {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| UnknownPolicy(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PolicyConfig {
    pub name: PolicyName,
    /// Without a predictor, fetch stops at every control-flow instruction.
    pub use_branch_predictor: bool,
    pub honor_fe_tags: bool,
    pub honor_be_and_bd_tags: bool,
    /// Every conditional branch and indirect jump acts as `BR_invalid`.
    pub legacy_conservative: bool,
    /// Values derived from loads may not reach a speculative load address or
    /// branch condition. Stores are not restricted.
    pub stt_mode: bool,
}

impl PolicyConfig {
    /// Whether the back-end restriction bits are in use at all.
    pub fn restricts_backend(&self) -> bool {
        self.honor_be_and_bd_tags || self.legacy_conservative
    }
}

pub fn make_policy(name: PolicyName) -> PolicyConfig {
    let base = PolicyConfig {
        name,
        use_branch_predictor: true,
        honor_fe_tags: false,
        honor_be_and_bd_tags: false,
        legacy_conservative: false,
        stt_mode: false,
    };
    match name {
        PolicyName::Unprotected => base,
        PolicyName::SecureBaseline => PolicyConfig {
            use_branch_predictor: false,
            ..base
        },
        PolicyName::Conservative => PolicyConfig {
            honor_fe_tags: true,
            legacy_conservative: true,
            ..base
        },
        PolicyName::SttLike => PolicyConfig {
            stt_mode: true,
            ..base
        },
        PolicyName::SpecControl => PolicyConfig {
            honor_fe_tags: true,
            honor_be_and_bd_tags: true,
            ..base
        },
    }
}

/// Resets every tag to the legacy encoding, modelling an unannotated binary.
pub fn strip_annotations(m: &MarkedProgram) -> MarkedProgram {
    MarkedProgram {
        program: m.program.stripped(),
        ..m.clone()
    }
}

/// Re-annotates with no branch front-end restricted.
pub fn mark_none(m: &MarkedProgram) -> MarkedProgram {
    annotate(&m.program, &AnnotationPolicy { fe: FeMarking::None })
}

/// Re-annotates with every conditional branch between the labels `from` and
/// `to` front-end restricted. Returns `None` if a label is missing.
pub fn mark_all_in(m: &MarkedProgram, from: &str, to: &str) -> Option<MarkedProgram> {
    let from = *m.program.labels.get(from)?;
    let to = *m.program.labels.get(to)?;
    Some(annotate(
        &m.program,
        &AnnotationPolicy {
            fe: FeMarking::Span { from, to },
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::MarkedProgram;
    use crate::isa::parse_program;

    #[test]
    fn names_round_trip() {
        for p in PolicyName::ALL {
            assert_eq!(p.as_str().parse::<PolicyName>(), Ok(p));
        }
        assert!("dolma".parse::<PolicyName>().is_err());
    }

    #[test]
    fn baseline_has_no_predictor() {
        let b = make_policy(PolicyName::SecureBaseline);
        assert!(!b.use_branch_predictor);
        assert!(make_policy(PolicyName::Unprotected).use_branch_predictor);
        assert!(!make_policy(PolicyName::Unprotected).restricts_backend());
        assert!(make_policy(PolicyName::Conservative).restricts_backend());
    }

    #[test]
    fn strip_is_idempotent() {
        let p = parse_program(".secret k 0x100 8\nload r1, k\nbeq r1, 0, a\nli r2, 1\na:\nhalt").unwrap();
        let m = annotate(&p, &AnnotationPolicy::default());
        let s = strip_annotations(&m);
        assert!(s.program.instructions.iter().all(|i| i.tags.is_legacy()));
        assert_eq!(strip_annotations(&s).program, s.program);
        assert!(mark_none(&m).fe_branches().is_empty());
        let all = mark_all_in(&MarkedProgram::unannotated(p), "a", "a").unwrap();
        assert!(all.fe_branches().is_empty());
    }
}
