//! Front-end attack on the ladder: the victim trains the shared branch
//! predictor, then the attacker runs the same code with a known key prefix
//! plus a guess for the next bit and times that iteration. The guess that the
//! trained predictor agrees with avoids a misprediction and finishes sooner.
//! The attacker owns its copy of the key, so it pre-loads the prefix lines and
//! only the guessed bit's load misses.

use serde::Serialize;

use super::outcome::{AttackKind, AttackOutcome, TimingSample};
use super::rsa::{build_rsa_ladder, LadderParams, KEY_BASE, KEY_STRIDE, TIMES_BASE};
use crate::isa::Memory;
use crate::pipeline::{Cache, SimConfig, SimError, Simulator};
use crate::policies::PolicyConfig;
use crate::predictor::{Predictor, PredictorConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SpecfetchParams {
    #[serde(skip)]
    pub victim: LadderParams,
    /// Victim executions before the attacker measures.
    pub rounds: u32,
    pub predictor: PredictorConfig,
    /// A bit stays unknown unless the two guesses differ by more than this.
    pub threshold: u64,
    /// When false, the attacker's measurement runs keep every instruction
    /// after an unresolved branch from executing (fetch still predicts).
    pub backend_speculation: bool,
}

impl SpecfetchParams {
    pub fn new(victim: LadderParams) -> SpecfetchParams {
        SpecfetchParams {
            victim,
            rounds: 4,
            predictor: PredictorConfig::gshare(20, 19),
            threshold: 0,
            backend_speculation: true,
        }
    }
}

fn run_ladder(
    lp: &LadderParams,
    policy: &PolicyConfig,
    cfg: &SimConfig,
    predictor: Predictor,
    warm_bits: u32,
) -> Result<(Memory, Predictor, u64), SimError> {
    let m = build_rsa_ladder(lp);
    let mut cache = Cache::new(cfg.cache_lines, cfg.hit_latency, cfg.miss_latency);
    for j in 0..warm_bits {
        cache.install(KEY_BASE + KEY_STRIDE * j as u64);
    }
    let res = Simulator::new(
        &m.program,
        *policy,
        *cfg,
        m.program.initial_memory(),
        Some(predictor),
    )
    .with_cache(cache)
    .run()?;
    Ok((res.state.memory, res.predictor, res.cycles))
}

/// Predictor state after `rounds` victim executions.
pub fn trained_predictor(
    victim: &LadderParams,
    rounds: u32,
    predictor: PredictorConfig,
    policy: &PolicyConfig,
    cfg: &SimConfig,
) -> Result<Predictor, SimError> {
    let mut pred = Predictor::new(predictor);
    for _ in 0..rounds {
        pred = run_ladder(victim, policy, cfg, pred, 0)?.1;
    }
    Ok(pred)
}

/// Whether two victims with different keys leave identical predictor state.
pub fn predictor_independent_of_key(
    a: &LadderParams,
    b: &LadderParams,
    sp: &SpecfetchParams,
    policy: &PolicyConfig,
    cfg: &SimConfig,
) -> Result<bool, SimError> {
    let pa = trained_predictor(a, sp.rounds, sp.predictor, policy, cfg)?;
    let pb = trained_predictor(b, sp.rounds, sp.predictor, policy, cfg)?;
    Ok(pa == pb)
}

/// Recovers the victim key bit by bit, most significant first. Each bit is
/// decided from the two guesses' join timestamps; later bits build on the
/// recovered prefix, with unknown bits guessed as 0.
pub fn run_specfetch_attack(
    sp: &SpecfetchParams,
    policy: &PolicyConfig,
    cfg: &SimConfig,
) -> Result<AttackOutcome, SimError> {
    let trained = trained_predictor(&sp.victim, sp.rounds, sp.predictor, policy, cfg)?;
    let measure = PolicyConfig {
        legacy_conservative: policy.legacy_conservative || !sp.backend_speculation,
        ..*policy
    };
    let n = sp.victim.nbits;
    let mut prefix = 0u64;
    let mut recovered = Vec::new();
    let mut samples = Vec::new();
    let mut min_gap: Option<u64> = None;
    let mut cycles = 0;
    for i in 0..n {
        let mut times = [0u64; 2];
        for guess in 0..2u64 {
            let lp = LadderParams {
                key: (prefix << 1) | guess,
                nbits: i + 1,
                ..sp.victim
            };
            let (mem, _, c) = run_ladder(&lp, &measure, cfg, trained.clone(), i)?;
            times[guess as usize] = mem.read_u64(TIMES_BASE + 8 * i as u64);
            cycles = c;
            samples.push(TimingSample {
                position: i as usize,
                guess,
                cycles: times[guess as usize],
            });
        }
        let gap = times[0].abs_diff(times[1]);
        min_gap = Some(min_gap.map_or(gap, |g| g.min(gap)));
        let bit = if gap <= sp.threshold {
            None
        } else {
            Some(u8::from(times[1] < times[0]))
        };
        recovered.push(bit);
        prefix = (prefix << 1) | u64::from(bit.unwrap_or(0));
    }
    Ok(AttackOutcome {
        kind: AttackKind::Specfetch,
        policy: policy.name,
        distinguishable: recovered.iter().any(Option::is_some),
        recovered,
        ground_truth: sp.victim.bits(),
        timing_samples: samples,
        hot_lines: Vec::new(),
        min_gap,
        cycles,
    })
}
