//! The `specctl` command line: analyze, run, compare, attack and study.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 when a
//! verification fails (ordering violated, golden-model mismatch, an attack
//! outcome other than the expected one).

mod config;
mod report;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{annotate, AnnotationPolicy, FeMarking, MarkedProgram};
use crate::attacks::{
    build_spectre, run_specfetch_attack, run_spectre_attack, AttackKind, AttackOutcome,
    LadderParams, SpecfetchParams, SpectreParams, Transmit, MAX_KEY_BITS,
};
use crate::isa::{parse_program, print_program};
use crate::pipeline::{check_golden, run, SimConfig};
use crate::policies::{make_policy, strip_annotations, PolicyName};
use crate::predictor::{memorization_study, PredictorConfig, StudyResult};
use crate::suite::{benchmark_suite, fixture};

pub use config::{load_config, parse_config, ConfigFileError};
pub use report::{check_ordering, compare, write_csv, CompareError, OrderingViolation, Report, ReportRow, ORDERED};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "specctl", version, about = "Speculation-restriction analysis and pipeline experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Annotate a program with restriction tags.
    Analyze(AnalyzeArgs),
    /// Simulate one program under one policy.
    Run(RunArgs),
    /// Run programs under several policies and check the cycle ordering.
    Compare(CompareArgs),
    /// Run an attack and report whether the secret was recovered.
    Attack(AttackArgs),
    /// Predictor memorization study on the ladder's key branch.
    Study(StudyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FeChoice {
    Tainted,
    None,
    All,
}

impl From<FeChoice> for FeMarking {
    fn from(c: FeChoice) -> FeMarking {
        match c {
            FeChoice::Tainted => FeMarking::Tainted,
            FeChoice::None => FeMarking::None,
            FeChoice::All => FeMarking::All,
        }
    }
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Assembly file, or the name of a built-in fixture.
    pub input: String,
    /// Where to write the annotated program (stdout if omitted).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Emit legacy (all-invalid) tags instead of analysis results.
    #[arg(long)]
    pub strip: bool,
    /// Which branches get the front-end restriction.
    #[arg(long, value_enum, default_value = "tainted")]
    pub fe: FeChoice,
}

#[derive(Args, Debug, Default)]
pub struct SimArgs {
    /// Flat key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Assembly file, or the name of a built-in fixture.
    pub program: String,
    #[arg(long, default_value = "speccontrol")]
    pub policy: PolicyName,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Use the tags written in the file instead of re-analyzing.
    #[arg(long)]
    pub as_is: bool,
    /// Stream the per-cycle trace as CSV.
    #[arg(long)]
    pub trace: bool,
    /// Also run the interpreter and require identical architectural state.
    #[arg(long)]
    pub check: bool,
    /// Print the result as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Assembly files or fixture names.
    pub programs: Vec<String>,
    /// Add every built-in benchmark fixture.
    #[arg(long)]
    pub suite: bool,
    #[arg(long, value_delimiter = ',', default_values_t = ORDERED.to_vec())]
    pub policies: Vec<PolicyName>,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Runs per cell; every repetition must give the same cycle count.
    #[arg(long, default_value_t = 1)]
    pub repetitions: usize,
    /// Write the CSV table here instead of stdout.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write the full JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AttackArgs {
    #[arg(long)]
    pub kind: AttackKind,
    #[arg(long, default_value = "unprotected")]
    pub policy: PolicyName,
    /// Mistraining rounds (cache attacks) or victim training runs (specfetch).
    #[arg(long)]
    pub rounds: Option<u64>,
    /// Secret byte for the cache attacks.
    #[arg(long, default_value_t = 0x2a)]
    pub secret: u8,
    /// Victim key for specfetch, as binary digits, most significant first.
    #[arg(long, default_value = "1011001011110111111")]
    pub key: String,
    /// Specfetch only: measure with back-end speculation disabled.
    #[arg(long)]
    pub no_backend_speculation: bool,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Fail with exit code 2 unless the verdict matches.
    #[arg(long, value_enum)]
    pub expect: Option<Expect>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Expect {
    Recovered,
    Protected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StudyKind {
    Memorization,
}

#[derive(Args, Debug)]
pub struct StudyArgs {
    #[arg(long, value_enum, default_value = "memorization")]
    pub kind: StudyKind,
    /// Predictors to compare, as pht:K or gshare:K:H.
    #[arg(long = "predictor", default_values_t = vec![
        PredictorConfig::pht(10),
        PredictorConfig::gshare(10, 8),
        PredictorConfig::gshare(20, 19),
    ])]
    pub predictors: Vec<PredictorConfig>,
    #[arg(long, default_value_t = 1000)]
    pub rounds: usize,
    /// Victim key as binary digits, most significant first.
    #[arg(long, default_value = "1011001011110111111")]
    pub key: String,
    /// Write the per-bit CSV here instead of stdout.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// A user-facing failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn usage(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.to_string(),
    }
}

fn verify(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_VERIFY,
        message: message.to_string(),
    }
}

/// Parses `args` (including the program name) and runs the command, writing
/// results to `out`. Returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "specctl: {}", f.message);
            f.code
        }
    }
}

pub fn execute(cmd: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::Analyze(a) => cmd_analyze(&a, out),
        Command::Run(a) => cmd_run(&a, out),
        Command::Compare(a) => cmd_compare(&a, out),
        Command::Attack(a) => cmd_attack(&a, out),
        Command::Study(a) => cmd_study(&a, out),
    }
    .map_err(|e| match e {
        Either::Io(e) => usage(e),
        Either::Fail(f) => f,
    })
}

enum Either {
    Io(io::Error),
    Fail(Failure),
}

impl From<io::Error> for Either {
    fn from(e: io::Error) -> Self {
        Either::Io(e)
    }
}

impl From<Failure> for Either {
    fn from(f: Failure) -> Self {
        Either::Fail(f)
    }
}

/// Source text of a file, or of a built-in fixture when no such file exists.
fn read_source(name: &str) -> Result<String, Failure> {
    let path = Path::new(name);
    if path.exists() {
        return fs::read_to_string(path).map_err(|e| usage(format!("{name}: {e}")));
    }
    fixture(name)
        .map(|f| f.source)
        .ok_or_else(|| usage(format!("{name}: no such file or built-in fixture")))
}

fn load_program(name: &str, fe: FeMarking, as_is: bool) -> Result<MarkedProgram, Failure> {
    let src = read_source(name)?;
    let p = parse_program(&src).map_err(|e| usage(format!("{name}: {e}")))?;
    Ok(if as_is {
        MarkedProgram::unannotated(p)
    } else {
        annotate(&p, &AnnotationPolicy { fe })
    })
}

fn sim_config(a: &SimArgs) -> Result<SimConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => load_config(path).map_err(usage)?,
        None => SimConfig::default(),
    };
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim()).map_err(usage)?;
    }
    Ok(cfg)
}

fn write_to(path: &Option<PathBuf>, out: &mut dyn Write, text: &str) -> io::Result<()> {
    match path {
        Some(p) => fs::write(p, text),
        None => out.write_all(text.as_bytes()),
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn cmd_analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<(), Either> {
    let m = load_program(&a.input, a.fe.into(), false)?;
    let m = if a.strip { strip_annotations(&m) } else { m };
    let text = print_program(&m.program);
    write_to(&a.output, out, &text)?;
    if a.output.is_some() {
        writeln!(
            out,
            "{}: {} instructions, {} branches, {} front-end restricted",
            a.input,
            m.program.len(),
            m.program.cond_branches().count(),
            m.fe_branches().len()
        )?;
    }
    Ok(())
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<(), Either> {
    let m = load_program(&a.program, FeMarking::Tainted, a.as_is)?;
    let mut cfg = sim_config(&a.sim)?;
    cfg.trace |= a.trace;
    let policy = make_policy(a.policy);
    let res = run(&m, &policy, &cfg).map_err(|e| usage(format!("{}: {e}", a.program)))?;
    if a.trace {
        writeln!(out, "cycle,stage,seq,pc,detail")?;
        for ev in &res.trace {
            writeln!(out, "{ev}")?;
        }
    }
    if a.json {
        out.write_all(json(&res).as_bytes())?;
    } else {
        let b = res.commit_breakdown;
        let s = res.stalls;
        writeln!(out, "program: {}", a.program)?;
        writeln!(out, "policy: {}", a.policy)?;
        writeln!(out, "cycles: {}", res.cycles)?;
        writeln!(out, "committed: {}", res.committed)?;
        writeln!(
            out,
            "commit breakdown: relaxed={} remained_restricted={} not_restricted={}",
            b.relaxed, b.remained_restricted, b.not_restricted
        )?;
        writeln!(
            out,
            "stalls: fetch_blocked={} rob_full={} lsq_full={} ubt_conflict={} ubt_full={} serialize={} head_restricted={}",
            s.fetch_blocked, s.rob_full, s.lsq_full, s.ubt_conflict, s.ubt_full, s.serialize, s.commit_head_restricted
        )?;
    }
    if a.check {
        let g = check_golden(&m, &policy, &cfg).map_err(|e| usage(format!("{}: {e}", a.program)))?;
        if !g.matches {
            return Err(verify(format!(
                "golden-model mismatch: registers {:?}, {} memory bytes",
                g.differing_registers,
                g.differing_bytes.len()
            ))
            .into());
        }
        writeln!(out, "golden check: OK")?;
    }
    Ok(())
}

fn cmd_compare(a: &CompareArgs, out: &mut dyn Write) -> Result<(), Either> {
    let cfg = sim_config(&a.sim)?;
    let mut programs = Vec::new();
    for name in &a.programs {
        programs.push((name.clone(), load_program(name, FeMarking::Tainted, false)?));
    }
    if a.suite {
        for f in benchmark_suite() {
            let m = f.build().map_err(|e| usage(format!("{}: {e}", f.name)))?;
            programs.push((f.name, m));
        }
    }
    let report = compare(&programs, &a.policies, &cfg, a.repetitions).map_err(|e| match e {
        CompareError::Nondeterministic { .. } => verify(e),
        _ => usage(e),
    })?;
    let mut csv = Vec::new();
    write_csv(&mut csv, &report)?;
    write_to(&a.csv, out, &String::from_utf8(csv).expect("csv is utf-8"))?;
    if let Some(path) = &a.report {
        fs::write(path, json(&report))?;
    }
    if report.ordering_ok {
        writeln!(out, "ordering: OK")?;
        Ok(())
    } else {
        for v in &report.violations {
            writeln!(out, "ordering: VIOLATED {}: {}", v.program, v.detail)?;
        }
        Err(verify(format!("cycle ordering violated on {} program(s)", report.violations.len())).into())
    }
}

/// Parses a binary key string, most significant bit first.
pub fn parse_key(s: &str) -> Result<LadderParams, String> {
    if s.is_empty() || s.len() > MAX_KEY_BITS as usize || !s.chars().all(|c| c == '0' || c == '1') {
        return Err(format!("key `{s}` must be 1 to {MAX_KEY_BITS} binary digits"));
    }
    Ok(LadderParams {
        key: u64::from_str_radix(s, 2).unwrap(),
        nbits: s.len() as u32,
        ..LadderParams::standard()
    })
}

fn run_attack(a: &AttackArgs, cfg: &SimConfig) -> Result<AttackOutcome, Failure> {
    let policy = make_policy(a.policy);
    let spectre = |mut sp: SpectreParams| {
        if let Some(r) = a.rounds {
            if r > 64 {
                return Err(usage("--rounds must be at most 64 for cache attacks"));
            }
            sp.mistrain = r;
        }
        run_spectre_attack(&build_spectre(&sp), &sp, &policy, cfg).map_err(usage)
    };
    match a.kind {
        AttackKind::SpectreV1 => spectre(SpectreParams::v1(a.secret)),
        AttackKind::SpectreV1Store => spectre(SpectreParams {
            transmit: Transmit::Store,
            ..SpectreParams::v1(a.secret)
        }),
        AttackKind::CtLoad => spectre(SpectreParams::ct(a.secret, Transmit::Load)),
        AttackKind::CtStore => spectre(SpectreParams::ct(a.secret, Transmit::Store)),
        AttackKind::Specfetch => {
            let mut sp = SpecfetchParams::new(parse_key(&a.key).map_err(usage)?);
            if let Some(r) = a.rounds {
                sp.rounds = r as u32;
            }
            sp.backend_speculation = !a.no_backend_speculation;
            run_specfetch_attack(&sp, &policy, cfg).map_err(usage)
        }
    }
}

fn cmd_attack(a: &AttackArgs, out: &mut dyn Write) -> Result<(), Either> {
    let cfg = sim_config(&a.sim)?;
    let o = run_attack(a, &cfg)?;
    if a.json {
        out.write_all(json(&o).as_bytes())?;
    } else {
        let shown: String = o
            .recovered
            .iter()
            .map(|r| match (r, o.kind) {
                (None, _) => "?".to_string(),
                (Some(b), AttackKind::Specfetch) => b.to_string(),
                (Some(b), _) => format!("{b:#04x}"),
            })
            .collect::<Vec<_>>()
            .join(if o.kind == AttackKind::Specfetch { "" } else { " " });
        writeln!(out, "attack: {} policy: {}", o.kind, o.policy)?;
        writeln!(out, "recovered: {shown}")?;
        if let Some(g) = o.min_gap {
            writeln!(out, "min timing gap: {g} cycles")?;
        }
        if !o.hot_lines.is_empty() {
            writeln!(out, "hot probe lines: {:?}", o.hot_lines)?;
        }
        writeln!(out, "verdict: {}", o.verdict())?;
    }
    let got = if o.nothing_recovered() { Expect::Protected } else { Expect::Recovered };
    match a.expect {
        Some(e) if e != got => Err(verify(format!("expected {e:?}, got {}", o.verdict())).into()),
        _ => Ok(()),
    }
}

fn cmd_study(a: &StudyArgs, out: &mut dyn Write) -> Result<(), Either> {
    let StudyKind::Memorization = a.kind;
    let lp = parse_key(&a.key).map_err(usage)?;
    let p = crate::attacks::ladder_program(&lp);
    let m = annotate(&p, &AnnotationPolicy { fe: FeMarking::None });
    let mut results: Vec<StudyResult> = Vec::new();
    for cfg in &a.predictors {
        results.push(memorization_study(&m, a.rounds, *cfg).map_err(usage)?);
    }
    let mut csv = String::from("predictor,iteration,prediction,true_bit\n");
    for r in &results {
        for row in &r.rows {
            csv.push_str(&format!("{},{},{},{}\n", r.config, row.iteration, row.prediction, row.true_bit));
        }
    }
    write_to(&a.csv, out, &csv)?;
    for r in &results {
        writeln!(out, "{}: recovered {}/{} bits after {} rounds", r.config, r.recovered, r.rows.len(), r.rounds)?;
    }
    Ok(())
}
