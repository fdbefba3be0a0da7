//! Attack protocols and the predictor memorization study.

use speccontrol::analysis::{annotate, AnnotationPolicy, FeMarking};
use speccontrol::attacks::{
    build_spectre, ladder_program, predictor_independent_of_key, run_spectre_attack,
    run_specfetch_attack, LadderParams, SpecfetchParams, SpectreParams, Transmit, STANDARD_KEY,
};
use speccontrol::pipeline::SimConfig;
use speccontrol::policies::{make_policy, PolicyName};
use speccontrol::predictor::{memorization_study, PredictorConfig};

#[test]
fn spectre_needs_mistraining() {
    let sp = SpectreParams { mistrain: 0, ..SpectreParams::v1(0x2a) };
    let o = run_spectre_attack(&build_spectre(&sp), &sp, &make_policy(PolicyName::Unprotected), &SimConfig::default()).unwrap();
    assert!(o.nothing_recovered(), "{:?}", o.hot_lines);
}

#[test]
fn spectre_recovers_other_secrets() {
    for secret in [0u8, 7, 0xff] {
        let sp = SpectreParams::v1(secret);
        let o = run_spectre_attack(&build_spectre(&sp), &sp, &make_policy(PolicyName::Unprotected), &SimConfig::default()).unwrap();
        assert_eq!(o.recovered, vec![Some(secret)]);
    }
}

#[test]
fn secure_baseline_blocks_every_gadget() {
    for transmit in [Transmit::Load, Transmit::Store] {
        for sp in [SpectreParams { transmit, ..SpectreParams::v1(0x2a) }, SpectreParams::ct(0x2a, transmit)] {
            let o = run_spectre_attack(&build_spectre(&sp), &sp, &make_policy(PolicyName::SecureBaseline), &SimConfig::default()).unwrap();
            assert!(o.nothing_recovered(), "{}", sp.kind());
        }
    }
}

#[test]
fn specfetch_verdicts_by_policy() {
    let cfg = SimConfig::default();
    let sp = SpecfetchParams::new(LadderParams::standard());
    let verdict = |name| run_specfetch_attack(&sp, &make_policy(name), &cfg).unwrap();
    assert!(verdict(PolicyName::Unprotected).succeeded());
    // Restricting only load addresses and branch conditions leaves the
    // front-end channel open.
    assert!(verdict(PolicyName::SttLike).succeeded());
    for name in [PolicyName::SpecControl, PolicyName::Conservative, PolicyName::SecureBaseline] {
        assert!(verdict(name).nothing_recovered(), "{name}");
    }
}

#[test]
fn specfetch_without_backend_speculation() {
    let cfg = SimConfig::default();
    let sp = SpecfetchParams { backend_speculation: false, ..SpecfetchParams::new(LadderParams::standard()) };
    let open = run_specfetch_attack(&sp, &make_policy(PolicyName::Unprotected), &cfg).unwrap();
    assert!(open.succeeded());
    assert!(open.min_gap.unwrap() >= cfg.miss_latency - cfg.hit_latency);
    let closed = run_specfetch_attack(&sp, &make_policy(PolicyName::SpecControl), &cfg).unwrap();
    assert_eq!(closed.min_gap, Some(0));
}

#[test]
fn unprotected_predictor_state_depends_on_the_key() {
    let cfg = SimConfig::default();
    let sp = SpecfetchParams::new(LadderParams::standard());
    let other = LadderParams { key: STANDARD_KEY ^ 0b101, ..LadderParams::standard() };
    let same = |name| predictor_independent_of_key(&LadderParams::standard(), &other, &sp, &make_policy(name), &cfg).unwrap();
    assert!(!same(PolicyName::Unprotected));
    assert!(same(PolicyName::SpecControl));
}

fn study(rounds: usize, config: PredictorConfig) -> usize {
    let m = annotate(&ladder_program(&LadderParams::standard()), &AnnotationPolicy { fe: FeMarking::None });
    memorization_study(&m, rounds, config).unwrap().recovered
}

/// Counts measured for the standard key with this simulator's predictors.
#[test]
fn memorization_counts() {
    assert_eq!(study(1000, PredictorConfig::pht(10)), 12);
    assert_eq!(study(1000, PredictorConfig::gshare(10, 8)), 17);
    assert_eq!(study(1000, PredictorConfig::gshare(20, 19)), 19);
    assert_eq!(study(0, PredictorConfig::gshare(20, 19)), 0);
}

#[test]
fn fe_marked_branch_leaves_nothing_to_memorize() {
    let m = annotate(&ladder_program(&LadderParams::standard()), &AnnotationPolicy::default());
    assert_eq!(memorization_study(&m, 1000, PredictorConfig::gshare(20, 19)).unwrap().recovered, 0);
}
