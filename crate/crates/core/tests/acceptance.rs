//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Tolerances are the constants below.

mod common;

use std::time::{Duration, Instant};

use common::{branch_count, control_dependents, dependents_closure, random_program, MAX_BRANCHES, MAX_INSTS};
use speccontrol::analysis::{analyze, annotate, branch_dependents_traversal, AnnotationPolicy, FeMarking};
use speccontrol::attacks::{
    build_spectre, ladder_program, predictor_independent_of_key, run_spectre_attack,
    run_specfetch_attack, LadderParams, SpecfetchParams, SpectreParams, Transmit,
};
use speccontrol::cli::{compare, ORDERED};
use speccontrol::isa::{TagWord, TAG_BITS};
use speccontrol::pipeline::{check_golden, run, SimConfig};
use speccontrol::policies::{make_policy, PolicyName};
use speccontrol::predictor::{memorization_study, PredictorConfig};
use speccontrol::suite::{benchmark_suite, fixture};

const GOLDEN_PROGRAMS: u64 = 200;
const GOLDEN_BUDGET: Duration = Duration::from_secs(120);
const ORACLE_PROGRAMS: u64 = 50;
const SPECFETCH_BUDGET: Duration = Duration::from_secs(60);
const MIN_SUITE: usize = 8;
const UBT_SIZES: [usize; 3] = [2, 8, 16];
const STUDY_ROUNDS: usize = 1000;
/// Bits of the victim key.
const KEY_BITS: usize = 19;
/// A second key for the predictor-state comparison.
const OTHER_KEY: u64 = 0b0100110100001000000;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(cond: bool, detail: String) -> Verdict {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn golden_corpus(cfg: &SimConfig) -> Result<usize, String> {
    let mut runs = 0;
    for seed in 0..GOLDEN_PROGRAMS {
        let p = random_program(seed);
        if p.len() > MAX_INSTS || branch_count(&p) > MAX_BRANCHES {
            return Err(format!("seed {seed} exceeds the generator limits"));
        }
        let m = annotate(&p, &AnnotationPolicy::default());
        for name in PolicyName::ALL {
            let r = check_golden(&m, &make_policy(name), cfg).map_err(|e| format!("seed {seed}, {name}: {e}"))?;
            if !r.matches {
                return Err(format!("seed {seed}, {name}: {r:?}"));
            }
            runs += 1;
        }
    }
    Ok(runs)
}

fn golden_equivalence() -> Verdict {
    let t = Instant::now();
    let runs = golden_corpus(&SimConfig::default())?;
    let took = t.elapsed();
    check(took < GOLDEN_BUDGET, format!("{runs} runs identical in {:.1}s", took.as_secs_f64()))
}

fn dependents_oracle() -> Verdict {
    let mut branches = 0;
    for seed in 0..ORACLE_PROGRAMS {
        let p = random_program(seed);
        let a = analyze(&p);
        for br in p.cond_branches() {
            let lib = branch_dependents_traversal(&a.deps.control_dependents[&br], &p, &a.def_use);
            if a.deps.control_dependents[&br] != control_dependents(&p, br) {
                return Err(format!("seed {seed}, branch {br}: control dependents differ"));
            }
            if lib != dependents_closure(&p, br) {
                return Err(format!("seed {seed}, branch {br}: dependents differ"));
            }
            branches += 1;
        }
    }
    check(branches > 0, format!("{branches} branches over {ORACLE_PROGRAMS} programs"))
}

fn spectre_matrix() -> Verdict {
    let cfg = SimConfig::default();
    let secret = 0x2a;
    let gadgets = [
        SpectreParams::v1(secret),
        SpectreParams { transmit: Transmit::Store, ..SpectreParams::v1(secret) },
        SpectreParams::ct(secret, Transmit::Load),
        SpectreParams::ct(secret, Transmit::Store),
    ];
    let policies = [PolicyName::Unprotected, PolicyName::SttLike, PolicyName::Conservative, PolicyName::SpecControl];
    let mut cells = 0;
    for sp in &gadgets {
        let m = build_spectre(sp);
        for name in policies {
            let o = run_spectre_attack(&m, sp, &make_policy(name), &cfg).map_err(|e| e.to_string())?;
            let leak = match name {
                PolicyName::Unprotected => true,
                PolicyName::SttLike => sp.transmit == Transmit::Store,
                _ => false,
            };
            let ok = if leak { o.succeeded() } else { o.nothing_recovered() };
            if !ok {
                return Err(format!("{} under {name}: hot lines {:?}", sp.kind(), o.hot_lines));
            }
            cells += 1;
        }
    }
    Ok(format!("{cells} gadget/policy cells as expected"))
}

fn specfetch() -> Verdict {
    let t = Instant::now();
    let cfg = SimConfig::default();
    let sp = SpecfetchParams::new(LadderParams::standard());
    let open = run_specfetch_attack(&sp, &make_policy(PolicyName::Unprotected), &cfg).map_err(|e| e.to_string())?;
    let need = cfg.miss_latency - cfg.hit_latency;
    let open_gap = open.min_gap.unwrap_or(0);
    if !open.succeeded() || open.recovered.len() != KEY_BITS || open_gap < need {
        return Err(format!("unprotected: recovered {:?}, min gap {open_gap}", open.recovered));
    }
    let guarded = make_policy(PolicyName::SpecControl);
    let closed = run_specfetch_attack(&sp, &guarded, &cfg).map_err(|e| e.to_string())?;
    let zero = closed.timing_samples.chunks(2).all(|g| g[0].cycles == g[1].cycles);
    if !zero || closed.min_gap != Some(0) || !closed.nothing_recovered() {
        return Err(format!("speccontrol: min gap {:?}", closed.min_gap));
    }
    let other = LadderParams { key: OTHER_KEY, ..LadderParams::standard() };
    let same = predictor_independent_of_key(&LadderParams::standard(), &other, &sp, &guarded, &cfg).map_err(|e| e.to_string())?;
    let took = t.elapsed();
    check(
        same && took < SPECFETCH_BUDGET,
        format!(
            "unprotected recovers {KEY_BITS} bits with gap >= {open_gap} (need {need}); speccontrol gap 0, predictor identical: {same}; {:.1}s",
            took.as_secs_f64()
        ),
    )
}

fn relaxation() -> Verdict {
    let cfg = SimConfig::default();
    let m = fixture("relax").unwrap().build().map_err(|e| e.to_string())?;
    let p = &m.program;
    let br = p.cond_branches().next().ok_or("no branch")?;
    let join = p.labels["join"];
    let deps = &m.deps.dependents[&br];
    let independent: Vec<usize> = (join..p.len())
        .filter(|i| !deps.contains(i) && !p.instructions[*i].opcode.is_control())
        .filter(|i| p.instructions[*i].opcode != speccontrol::isa::Opcode::Halt)
        .collect();
    let mut before = Vec::new();
    let mut cycles = Vec::new();
    for name in [PolicyName::SpecControl, PolicyName::Conservative] {
        let r = run(&m, &make_policy(name), &cfg).map_err(|e| e.to_string())?;
        let done = |i: usize| r.commits.iter().find(|c| c.index == i).map(|c| c.complete_cycle);
        let resolved = done(br).ok_or("branch never committed")?;
        before.push(independent.iter().filter(|&&i| done(i).is_some_and(|c| c < resolved)).count());
        cycles.push(r.cycles);
    }
    let n = independent.len();
    check(
        n > 0 && before[0] == n && before[1] == 0 && cycles[0] + cfg.miss_latency <= cycles[1],
        format!(
            "N={n}: speccontrol {}/{n} before resolution, conservative {}/{n}; cycles {} vs {}",
            before[0], before[1], cycles[0], cycles[1]
        ),
    )
}

fn ordering() -> Verdict {
    let suite: Vec<_> = benchmark_suite()
        .into_iter()
        .map(|f| Ok((f.name.clone(), f.build().map_err(|e| e.to_string())?)))
        .collect::<Result<_, String>>()?;
    if suite.len() < MIN_SUITE || suite[0].0 != "rsa" {
        return Err(format!("suite has {} programs", suite.len()));
    }
    let r = compare(&suite, &ORDERED, &SimConfig::default(), 1).map_err(|e| e.to_string())?;
    check(
        r.ordering_ok,
        if r.ordering_ok {
            format!("{} fixtures ordered", suite.len())
        } else {
            format!("{:?}", r.violations)
        },
    )
}

fn ubt() -> Verdict {
    let policy = make_policy(PolicyName::SpecControl);
    let looped = fixture("ubt_loop").unwrap().build().map_err(|e| e.to_string())?;
    let conflict = run(&looped, &policy, &SimConfig::default()).map_err(|e| e.to_string())?.stalls.ubt_conflict;
    let wide = fixture("branches15").unwrap().build().map_err(|e| e.to_string())?;
    let mut cycles = Vec::new();
    for ubt_size in UBT_SIZES {
        let cfg = SimConfig { ubt_size, ..SimConfig::default() };
        cycles.push(run(&wide, &policy, &cfg).map_err(|e| e.to_string())?.cycles);
        golden_corpus(&cfg).map_err(|e| format!("ubt {ubt_size}: {e}"))?;
    }
    let monotone = cycles.windows(2).all(|w| w[0] >= w[1]) && cycles[0] > cycles[2];
    check(
        conflict > 0 && monotone,
        format!("slot-conflict stall cycles {conflict}; cycles by size {UBT_SIZES:?}: {cycles:?}; golden holds at each size"),
    )
}

fn tag_round_trip() -> Verdict {
    let all = 1u16 << TAG_BITS;
    let bad = (0..all).filter(|&w| TagWord::decode(w).encode() != w).count();
    check(bad == 0, format!("{all} words, {bad} mismatches"))
}

fn memorization() -> Verdict {
    let lp = LadderParams::standard();
    let m = annotate(&ladder_program(&lp), &AnnotationPolicy { fe: FeMarking::None });
    let configs = [PredictorConfig::gshare(20, 19), PredictorConfig::gshare(10, 8), PredictorConfig::pht(10)];
    let mut got = Vec::new();
    for c in configs {
        got.push(memorization_study(&m, STUDY_ROUNDS, c).map_err(|e| e.to_string())?.recovered);
    }
    check(
        got[0] >= got[1] && got[1] >= got[2] && got[0] == KEY_BITS,
        format!("gshare:20:19 {} >= gshare:10:8 {} >= pht:10 {} of {KEY_BITS}", got[0], got[1], got[2]),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("golden-model equivalence", golden_equivalence),
        ("dependents equal brute-force closure", dependents_oracle),
        ("spectre matrix", spectre_matrix),
        ("speculative-fetch attack", specfetch),
        ("relaxation benefit", relaxation),
        ("policy cycle ordering", ordering),
        ("UBT semantics", ubt),
        ("tag round-trip", tag_round_trip),
        ("predictor memorization", memorization),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {}. {name}: {detail}", k + 1);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
