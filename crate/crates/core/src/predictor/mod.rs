//! Branch direction and target prediction: a table of 2-bit counters indexed
//! by pc alone or by pc xor global history, and a direct-mapped BTB.
//!
//! Counters start at 1 (weakly not-taken). Counters and the BTB only change
//! when a branch retires. The global history register is shifted when a
//! branch is predicted so later predictions on the same path see it, and is
//! restored from the branch's snapshot when the pipeline squashes.

mod study;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

pub use study::{memorization_study, write_study_csv, StudyResult, StudyRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    /// Indexed by pc only.
    Pht,
    /// Indexed by pc xor global history.
    Gshare,
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredictorKind::Pht => "pht",
            PredictorKind::Gshare => "gshare",
        })
    }
}

impl FromStr for PredictorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pht" => Ok(PredictorKind::Pht),
            "gshare" => Ok(PredictorKind::Gshare),
            _ => Err(format!("unknown predictor kind `{s}` (expected pht or gshare)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    /// log2 of the counter table size.
    pub k: u32,
    /// Global history length in bits (ignored for `Pht`).
    pub history: u32,
    /// log2 of the BTB size.
    pub btb_bits: u32,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            kind: PredictorKind::Gshare,
            k: 10,
            history: 8,
            btb_bits: 8,
        }
    }
}

impl PredictorConfig {
    pub fn pht(k: u32) -> Self {
        PredictorConfig {
            kind: PredictorKind::Pht,
            k,
            history: 0,
            ..Default::default()
        }
    }

    pub fn gshare(k: u32, history: u32) -> Self {
        PredictorConfig {
            kind: PredictorKind::Gshare,
            k,
            history,
            ..Default::default()
        }
    }
}

/// Short form used on the command line: `pht:K` or `gshare:K:H`.
impl fmt::Display for PredictorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PredictorKind::Pht => write!(f, "pht:{}", self.k),
            PredictorKind::Gshare => write!(f, "gshare:{}:{}", self.k, self.history),
        }
    }
}

impl FromStr for PredictorConfig {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| {
            t.parse::<u32>()
                .map_err(|_| format!("bad number `{t}` in predictor `{s}`"))
        };
        let cfg = match (parts[0].parse::<PredictorKind>()?, parts.len()) {
            (PredictorKind::Pht, 2) => PredictorConfig::pht(num(parts[1])?),
            (PredictorKind::Gshare, 3) => PredictorConfig::gshare(num(parts[1])?, num(parts[2])?),
            _ => return Err(format!("predictor `{s}` should be pht:K or gshare:K:H")),
        };
        if !(1..=24).contains(&cfg.k) || cfg.history > 63 {
            return Err(format!("predictor `{s}` out of range (K in 1..=24, H <= 63)"));
        }
        Ok(cfg)
    }
}

/// What the front end learns from one lookup, kept with the branch so that
/// the update at retirement hits the same counter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Prediction {
    pub taken: bool,
    pub target: Option<u64>,
    pub index: usize,
    /// Global history before this branch was shifted in.
    pub history: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Predictor {
    config: PredictorConfig,
    counters: Vec<u8>,
    ghr: u64,
    btb: Vec<Option<(u64, u64)>>,
}

impl Predictor {
    pub fn new(config: PredictorConfig) -> Predictor {
        assert!(config.k <= 28, "table too large");
        assert!(config.history <= 63 && config.btb_bits <= 20);
        Predictor {
            config,
            counters: vec![1; 1 << config.k],
            ghr: 0,
            btb: vec![None; 1 << config.btb_bits],
        }
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    pub fn counters(&self) -> &[u8] {
        &self.counters
    }

    pub fn history(&self) -> u64 {
        self.ghr
    }

    fn history_mask(&self) -> u64 {
        match self.config.kind {
            PredictorKind::Pht => 0,
            PredictorKind::Gshare => (1u64 << self.config.history) - 1,
        }
    }

    pub fn pht_index(&self, pc: u64, hist: u64) -> usize {
        let mask = (1u64 << self.config.k) - 1;
        let h = match self.config.kind {
            PredictorKind::Pht => 0,
            PredictorKind::Gshare => hist,
        };
        (((pc >> 2) ^ h) & mask) as usize
    }

    pub fn counter(&self, index: usize) -> u8 {
        self.counters[index]
    }

    /// Looks up direction and target without changing any state.
    pub fn predict(&self, pc: u64) -> Prediction {
        let index = self.pht_index(pc, self.ghr);
        let taken = self.counters[index] >= 2;
        Prediction {
            taken,
            target: if taken { self.btb_lookup(pc) } else { None },
            index,
            history: self.ghr,
        }
    }

    pub fn btb_lookup(&self, pc: u64) -> Option<u64> {
        match self.btb[self.btb_slot(pc)] {
            Some((tag, target)) if tag == pc => Some(target),
            _ => None,
        }
    }

    fn btb_slot(&self, pc: u64) -> usize {
        ((pc >> 2) as usize) & (self.btb.len() - 1)
    }

    /// Shifts a (predicted or actual) outcome into the global history.
    pub fn push_history(&mut self, taken: bool) {
        self.ghr = ((self.ghr << 1) | taken as u64) & self.history_mask();
    }

    pub fn restore_history(&mut self, hist: u64) {
        self.ghr = hist & self.history_mask();
    }

    /// Trains the counter a prediction used and, when taken, the BTB.
    pub fn train(&mut self, index: usize, pc: u64, taken: bool, target: u64) {
        let c = &mut self.counters[index];
        *c = if taken { (*c + 1).min(3) } else { c.saturating_sub(1) };
        if taken {
            let slot = self.btb_slot(pc);
            self.btb[slot] = Some((pc, target));
        }
    }

    /// Records a jump target without touching the counters.
    pub fn train_target(&mut self, pc: u64, target: u64) {
        let slot = self.btb_slot(pc);
        self.btb[slot] = Some((pc, target));
    }

    /// Non-speculative update: index with the current history, train, then
    /// shift the outcome in.
    pub fn update(&mut self, pc: u64, taken: bool, target: u64) {
        let index = self.pht_index(pc, self.ghr);
        self.train(index, pc, taken, target);
        self.push_history(taken);
    }
}
