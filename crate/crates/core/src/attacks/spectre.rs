//! Bounds-check bypass gadgets with an in-program flush+reload receiver.
//!
//! The program runs `mistrain + 1` rounds with `x = 0, 1, ...` against an
//! array of `mistrain` elements, so every round but the last is in bounds and
//! the last one reads one element past the end, where the secret sits. Each
//! round first flushes the probe array and the bound. After the rounds a
//! serializing flush keeps wrong-path code out of the receiver, then a probe
//! loop times one load per probe line and stores the latencies.

use serde::Serialize;

use super::outcome::{AttackKind, AttackOutcome, TimingSample};
use crate::analysis::{annotate, AnnotationPolicy, MarkedProgram};
use crate::isa::parse_program;
use crate::pipeline::{run, SimConfig, SimError};
use crate::policies::PolicyConfig;

pub const SECRET_ADDR: u64 = 0x1_1000;
pub const SIZE_ADDR: u64 = 0x2_0000;
pub const PROBE_BASE: u64 = 0x10_0000;
pub const PROBE_STRIDE: u64 = 512;
pub const PROBE_LINES: u64 = 256;
pub const RESULTS_BASE: u64 = 0x20_0000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Transmit {
    Load,
    Store,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Gadget {
    /// The secret is read out of bounds on the mispredicted path.
    BoundsBypass,
    /// The secret is loaded architecturally before the mispredicted branch.
    ConstantTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SpectreParams {
    pub gadget: Gadget,
    pub transmit: Transmit,
    pub secret: u8,
    /// In-bounds executions before the out-of-bounds one; also the array size.
    pub mistrain: u64,
}

impl SpectreParams {
    pub fn v1(secret: u8) -> SpectreParams {
        SpectreParams {
            gadget: Gadget::BoundsBypass,
            transmit: Transmit::Load,
            secret,
            mistrain: 4,
        }
    }

    pub fn ct(secret: u8, transmit: Transmit) -> SpectreParams {
        SpectreParams {
            gadget: Gadget::ConstantTime,
            transmit,
            secret,
            mistrain: 4,
        }
    }

    pub fn kind(&self) -> AttackKind {
        match (self.gadget, self.transmit) {
            (Gadget::BoundsBypass, Transmit::Load) => AttackKind::SpectreV1,
            (Gadget::BoundsBypass, Transmit::Store) => AttackKind::SpectreV1Store,
            (Gadget::ConstantTime, Transmit::Load) => AttackKind::CtLoad,
            (Gadget::ConstantTime, Transmit::Store) => AttackKind::CtStore,
        }
    }
}

pub fn spectre_source(sp: &SpectreParams) -> String {
    assert!(sp.mistrain <= 64);
    let arr1 = SECRET_ADDR - 8 * sp.mistrain;
    let probe_end = PROBE_LINES * PROBE_STRIDE;
    let mut s = String::new();
    if sp.mistrain > 0 {
        s.push_str(&format!(".region arr1 {arr1:#x} {} sandbox\n", 8 * sp.mistrain));
    }
    s.push_str(&format!(
        "\
.secret secret {SECRET_ADDR:#x} 8
.region size {SIZE_ADDR:#x} 8 public
.region arr2 {PROBE_BASE:#x} {probe_end} public
.region results {RESULTS_BASE:#x} {results} public
.word secret {secret}
.word size {m}
    load r15, secret
    li r10, 0
round:
    li r1, 0
flush:
    clflush arr2(r1)
    add r1, r1, {PROBE_STRIDE}
    bne r1, {probe_end}, flush
    clflush size
    shl r4, r10, 3
",
        results = PROBE_LINES * 8,
        secret = sp.secret,
        m = sp.mistrain,
    ));
    if sp.gadget == Gadget::ConstantTime {
        s.push_str("    load r3, secret\n");
    }
    s.push_str(
        "    load r2, size
    blt r10, r2, body
    jmp skip
body:
",
    );
    if sp.gadget == Gadget::BoundsBypass {
        s.push_str(&format!("    load r3, {arr1:#x}(r4)\n"));
    }
    s.push_str("    shl r6, r3, 9\n");
    s.push_str(match sp.transmit {
        Transmit::Load => "    load r5, arr2(r6)\n",
        Transmit::Store => "    store r10, arr2(r6)\n",
    });
    s.push_str(&format!(
        "\
skip:
    add r10, r10, 1
    bne r10, {rounds}, round
    clflush size
    li r1, 0
    li r8, 0
probe:
    rdcycle r11, r1
    and r12, r11, 0
    add r12, r12, r1
    load r13, arr2(r12)
    rdcycle r14, r13
    sub r14, r14, r11
    store r14, results(r8)
    add r1, r1, {PROBE_STRIDE}
    add r8, r8, 8
    bne r1, {probe_end}, probe
    halt
",
        rounds = sp.mistrain + 1,
    ));
    s
}

pub fn build_spectre(sp: &SpectreParams) -> MarkedProgram {
    let p = parse_program(&spectre_source(sp)).expect("gadget source assembles");
    annotate(&p, &AnnotationPolicy::default())
}

/// Bounds-check bypass with a load transmitter.
pub fn build_spectre_v1(secret: u8, mistrain: u64) -> MarkedProgram {
    build_spectre(&SpectreParams {
        mistrain,
        ..SpectreParams::v1(secret)
    })
}

/// Constant-time victim whose secret is transmitted on the wrong path.
pub fn build_ct_gadget(secret: u8, transmit: Transmit) -> MarkedProgram {
    build_spectre(&SpectreParams::ct(secret, transmit))
}

/// Runs the gadget and classifies each probe line: hot iff its latency is
/// below the midpoint of hit and miss latency. The byte counts as recovered
/// when exactly one line is hot.
pub fn run_spectre_attack(
    gadget: &MarkedProgram,
    sp: &SpectreParams,
    policy: &PolicyConfig,
    cfg: &SimConfig,
) -> Result<AttackOutcome, SimError> {
    let res = run(gadget, policy, cfg)?;
    let threshold = (cfg.hit_latency + cfg.miss_latency) / 2;
    let mut samples = Vec::new();
    let mut hot = Vec::new();
    for line in 0..PROBE_LINES {
        let lat = res.state.memory.read_u64(RESULTS_BASE + 8 * line);
        samples.push(TimingSample {
            position: 0,
            guess: line,
            cycles: lat,
        });
        if lat < threshold {
            hot.push(line as u8);
        }
    }
    let recovered = match hot.as_slice() {
        [b] => vec![Some(*b)],
        _ => vec![None],
    };
    Ok(AttackOutcome {
        kind: sp.kind(),
        policy: policy.name,
        distinguishable: !hot.is_empty(),
        recovered,
        ground_truth: vec![sp.secret],
        hot_lines: hot,
        timing_samples: samples,
        min_gap: None,
        cycles: res.cycles,
    })
}
