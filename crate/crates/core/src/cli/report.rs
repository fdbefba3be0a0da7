//! Policy comparison across programs and the report it produces.

use std::io::{self, Write};

use serde::Serialize;

use crate::analysis::MarkedProgram;
use crate::pipeline::{run, CommitBreakdown, SimConfig, SimError, StallBreakdown};
use crate::policies::{make_policy, PolicyName};

/// Policies whose cycle counts must be non-decreasing in this order.
pub const ORDERED: [PolicyName; 4] = [
    PolicyName::Unprotected,
    PolicyName::SpecControl,
    PolicyName::Conservative,
    PolicyName::SecureBaseline,
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub program: String,
    pub policy: PolicyName,
    pub cycles: u64,
    /// Cycles relative to the unprotected run of the same program.
    pub overhead: f64,
    pub commit_breakdown: CommitBreakdown,
    pub stalls: StallBreakdown,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OrderingViolation {
    pub program: String,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub ordering_ok: bool,
    pub violations: Vec<OrderingViolation>,
}

#[derive(Debug, thiserror::Error)]
pub enum CompareError {
    #[error("no programs to compare")]
    NoPrograms,
    #[error("no policies to compare")]
    NoPolicies,
    #[error("{program} under {policy}: {source}")]
    Sim {
        program: String,
        policy: PolicyName,
        source: SimError,
    },
    #[error("{program} under {policy}: cycle count changed between repetitions ({first} vs {again})")]
    Nondeterministic {
        program: String,
        policy: PolicyName,
        first: u64,
        again: u64,
    },
}

/// Runs every program under every policy (plus an unprotected baseline for
/// the overhead column) and checks the cycle ordering.
pub fn compare(
    programs: &[(String, MarkedProgram)],
    policies: &[PolicyName],
    cfg: &SimConfig,
    repetitions: usize,
) -> Result<Report, CompareError> {
    if programs.is_empty() {
        return Err(CompareError::NoPrograms);
    }
    if policies.is_empty() {
        return Err(CompareError::NoPolicies);
    }
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for (name, m) in programs {
        let cycles_of = |policy: PolicyName| -> Result<_, CompareError> {
            let sim = |_| {
                run(m, &make_policy(policy), cfg).map_err(|source| CompareError::Sim {
                    program: name.clone(),
                    policy,
                    source,
                })
            };
            let first = sim(())?;
            for _ in 1..repetitions.max(1) {
                let again = sim(())?.cycles;
                if again != first.cycles {
                    return Err(CompareError::Nondeterministic {
                        program: name.clone(),
                        policy,
                        first: first.cycles,
                        again,
                    });
                }
            }
            Ok(first)
        };
        let base = cycles_of(PolicyName::Unprotected)?;
        let mut measured = Vec::new();
        for &policy in policies {
            let res = if policy == PolicyName::Unprotected {
                base.clone()
            } else {
                cycles_of(policy)?
            };
            measured.push((policy, res.cycles));
            rows.push(ReportRow {
                program: name.clone(),
                policy,
                cycles: res.cycles,
                overhead: res.cycles as f64 / base.cycles as f64,
                commit_breakdown: res.commit_breakdown,
                stalls: res.stalls,
            });
        }
        let has_branch = m.program.instructions.iter().any(|i| i.opcode.is_control());
        violations.extend(check_ordering(name, &measured, has_branch));
    }
    Ok(Report {
        ordering_ok: violations.is_empty(),
        rows,
        violations,
    })
}

/// Ordering among whichever of the ordered policies were measured, and strict
/// improvement of unprotected over secure_baseline on programs with control
/// flow.
pub fn check_ordering(
    program: &str,
    measured: &[(PolicyName, u64)],
    has_branch: bool,
) -> Vec<OrderingViolation> {
    let present: Vec<(PolicyName, u64)> = ORDERED
        .iter()
        .filter_map(|p| measured.iter().find(|(q, _)| q == p).copied())
        .collect();
    let mut out = Vec::new();
    for w in present.windows(2) {
        if w[0].1 > w[1].1 {
            out.push(OrderingViolation {
                program: program.to_string(),
                detail: format!("{}={} > {}={}", w[0].0, w[0].1, w[1].0, w[1].1),
            });
        }
    }
    let get = |p| present.iter().find(|(q, _)| *q == p).map(|(_, c)| *c);
    if let (Some(u), Some(s)) = (get(PolicyName::Unprotected), get(PolicyName::SecureBaseline)) {
        if has_branch && u >= s {
            out.push(OrderingViolation {
                program: program.to_string(),
                detail: format!("unprotected={u} not below secure_baseline={s}"),
            });
        }
    }
    out
}

pub fn write_csv(w: &mut impl Write, report: &Report) -> io::Result<()> {
    writeln!(w, "program,policy,cycles,overhead")?;
    for r in &report.rows {
        writeln!(w, "{},{},{},{:.4}", r.program, r.policy, r.cycles, r.overhead)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suite::fixture;

    #[test]
    fn ordering_detects_inversion() {
        let m = [
            (PolicyName::Unprotected, 10),
            (PolicyName::SpecControl, 30),
            (PolicyName::Conservative, 20),
        ];
        let v = check_ordering("p", &m, true);
        assert_eq!(v.len(), 1);
        assert!(v[0].detail.contains("speccontrol=30"));
    }

    #[test]
    fn equal_extremes_only_fail_with_branches() {
        let m = [(PolicyName::Unprotected, 10), (PolicyName::SecureBaseline, 10)];
        assert!(check_ordering("p", &m, false).is_empty());
        assert_eq!(check_ordering("p", &m, true).len(), 1);
    }

    #[test]
    fn single_unprotected_row_has_unit_overhead() {
        let m = fixture("relax").unwrap().build().unwrap();
        let r = compare(&[("relax".into(), m)], &[PolicyName::Unprotected], &SimConfig::default(), 2).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].overhead, 1.0);
    }

    #[test]
    fn empty_program_list() {
        let e = compare(&[], &ORDERED, &SimConfig::default(), 1).unwrap_err();
        assert!(matches!(e, CompareError::NoPrograms));
    }
}
