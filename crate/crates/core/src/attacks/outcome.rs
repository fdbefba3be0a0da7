use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::policies::PolicyName;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    SpectreV1,
    SpectreV1Store,
    CtLoad,
    CtStore,
    Specfetch,
}

impl AttackKind {
    pub const ALL: [AttackKind; 5] = [
        AttackKind::SpectreV1,
        AttackKind::SpectreV1Store,
        AttackKind::CtLoad,
        AttackKind::CtStore,
        AttackKind::Specfetch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::SpectreV1 => "spectre_v1",
            AttackKind::SpectreV1Store => "spectre_v1_store",
            AttackKind::CtLoad => "ct_load",
            AttackKind::CtStore => "ct_store",
            AttackKind::Specfetch => "specfetch",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown attack `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TimingSample {
    /// Byte or bit position the sample belongs to.
    pub position: usize,
    pub guess: u64,
    pub cycles: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AttackOutcome {
    pub kind: AttackKind,
    pub policy: PolicyName,
    /// Per secret unit (byte or bit); `None` where the attacker cannot tell.
    pub recovered: Vec<Option<u8>>,
    pub ground_truth: Vec<u8>,
    pub timing_samples: Vec<TimingSample>,
    pub distinguishable: bool,
    /// Probe lines classified as cached (cache attacks only).
    pub hot_lines: Vec<u8>,
    /// Smallest timing difference between the two guesses of any bit
    /// (front-end attack only).
    pub min_gap: Option<u64>,
    /// Simulated cycles of the (last) measured run.
    pub cycles: u64,
}

impl AttackOutcome {
    /// Every unit was recovered and matches.
    pub fn succeeded(&self) -> bool {
        self.distinguishable
            && self.recovered.len() == self.ground_truth.len()
            && self
                .recovered
                .iter()
                .zip(&self.ground_truth)
                .all(|(r, g)| *r == Some(*g))
    }

    /// Nothing at all was learned.
    pub fn nothing_recovered(&self) -> bool {
        self.recovered.iter().all(Option::is_none)
    }

    pub fn verdict(&self) -> &'static str {
        if self.nothing_recovered() {
            "PROTECTED"
        } else {
            "RECOVERED"
        }
    }
}
