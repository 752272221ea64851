//! Command-line experiments and result files.

use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::{run_trials, stream_rng, stream_seed, ExecMode};
use crate::ledger::DepthLedger;
use crate::o2hlab::{
    check_find_bound, check_o2h, estimate_membership, sample_hidden_sets, sample_o2h_pairs, MembershipPoint,
    MembershipQuery, O2hProbe, StateSource,
};
use crate::oracle::{sample_shuffling, BackendKind, OracleAccess, RecordingOracle, SampleOptions};
use crate::schemes::{
    classical_collision_adversary, run_d_cq, run_d_qc, wilson_interval, DepthViolator, Guess, SchemeBudget, SchemeRun,
    SolverCq, SolverQc, Task, TruncatedQuantum,
};
use crate::simon::{sample_decision_instance, sample_one_to_one, sample_simon, SimonInstance};
use crate::solver::{
    default_decision_rounds, solve_decision_with, solve_search_with, SolverOptions, UncomputeSchedule,
};

/// Column order of the CSV export.
pub const CSV_HEADER: &str =
    "experiment,n,d,adversary,trials,success,ci_lo,ci_hi,oracle_layers_mean,classical_queries_mean,seconds";

#[derive(Parser, Debug, Clone)]
#[command(name = "shufflesim", version, about = "Simon's problem behind a shuffling oracle")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Master seed; every trial stream is derived from it.
    #[arg(long, global = true, env = "SHUFFLESIM_SEED", default_value_t = 7)]
    pub seed: u64,
    /// Trials per cell.
    #[arg(long, global = true, env = "SHUFFLESIM_TRIALS", default_value_t = 200)]
    pub trials: usize,
    #[arg(long, global = true, env = "SHUFFLESIM_BACKEND", default_value = "lazy")]
    pub backend: BackendKind,
    /// Output file; stdout when absent.
    #[arg(long, global = true, env = "SHUFFLESIM_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, env = "SHUFFLESIM_FORMAT", value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Run trials on one thread.
    #[arg(long, global = true, env = "SHUFFLESIM_SERIAL")]
    pub serial: bool,
    /// Fill the `seconds` column with wall time (makes output nondeterministic).
    #[arg(long, global = true, env = "SHUFFLESIM_RECORD_TIME")]
    pub record_time: bool,
}

impl CommonArgs {
    fn mode(&self) -> ExecMode {
        if self.serial {
            ExecMode::Serial
        } else {
            ExecMode::Parallel
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Run the solver over an (n, d) grid.
    Solve(SolveArgs),
    /// Run one adversary over an (n, d) grid.
    Adversary(AdversaryArgs),
    /// Hidden-set, shadow and O2H checks.
    O2h(O2hArgs),
    /// Solver and adversaries side by side over an (n, d) grid.
    Sweep(SweepArgs),
    /// Dump a sampled oracle and a transcript of path queries.
    SampleOracle(SampleOracleArgs),
}

/// Inclusive integer list: `3`, `2-6`, or `1,3,5`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntRange(pub Vec<usize>);

impl FromStr for IntRange {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("bad range {s:?}; use 3, 2-6 or 1,3,5");
        let mut out = Vec::new();
        for part in s.split(',') {
            match part.split_once('-') {
                Some((a, b)) => {
                    let a: usize = a.trim().parse().map_err(|_| bad())?;
                    let b: usize = b.trim().parse().map_err(|_| bad())?;
                    if a > b {
                        return Err(bad());
                    }
                    out.extend(a..=b);
                }
                None => out.push(part.trim().parse().map_err(|_| bad())?),
            }
        }
        if out.is_empty() {
            return Err(bad());
        }
        Ok(Self(out))
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Search,
    Decision,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Search => Task::Search,
            TaskArg::Decision => Task::Decision,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Sequential,
    SingleLayer,
}

impl From<ScheduleArg> for UncomputeSchedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Sequential => UncomputeSchedule::Sequential,
            ScheduleArg::SingleLayer => UncomputeSchedule::SingleLayer,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SolveArgs {
    #[arg(long, env = "SHUFFLESIM_N", default_value = "3")]
    pub n: IntRange,
    #[arg(long, env = "SHUFFLESIM_D", default_value = "1")]
    pub d: IntRange,
    #[arg(long, env = "SHUFFLESIM_TASK", value_enum, default_value_t = TaskArg::Search)]
    pub task: TaskArg,
    #[arg(long, env = "SHUFFLESIM_SCHEDULE", value_enum, default_value_t = ScheduleArg::Sequential)]
    pub schedule: ScheduleArg,
    /// Round cap for search, round count for decision (defaults 4n+20 and n+10).
    #[arg(long, env = "SHUFFLESIM_ROUNDS")]
    pub rounds: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversaryKind {
    SolverCq,
    SolverQc,
    Classical,
    Truncated,
    Violator,
}

impl AdversaryKind {
    fn name(self) -> &'static str {
        match self {
            Self::SolverCq => "solver-cq",
            Self::SolverQc => "solver-qc",
            Self::Classical => "classical",
            Self::Truncated => "truncated",
            Self::Violator => "violator",
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct AdversaryOpts {
    /// Oracle layers per circuit; defaults to 2d+1 for the solvers and d otherwise.
    #[arg(long, env = "SHUFFLESIM_BUDGET_DEPTH")]
    pub budget_depth: Option<u64>,
    /// Path queries for the classical adversary.
    #[arg(long, env = "SHUFFLESIM_Q", default_value_t = 100)]
    pub q: usize,
    /// Circuits the truncated adversary runs (default n+10).
    #[arg(long, env = "SHUFFLESIM_PROBES")]
    pub probes: Option<usize>,
    #[arg(long, env = "SHUFFLESIM_TASK", value_enum, default_value_t = TaskArg::Decision)]
    pub task: TaskArg,
}

#[derive(Args, Debug, Clone)]
pub struct AdversaryArgs {
    #[arg(long, alias = "adversary", env = "SHUFFLESIM_ADVERSARY", value_enum)]
    pub kind: AdversaryKind,
    #[arg(long, env = "SHUFFLESIM_N", default_value = "3")]
    pub n: IntRange,
    #[arg(long, env = "SHUFFLESIM_D", default_value = "1")]
    pub d: IntRange,
    #[command(flatten)]
    pub opts: AdversaryOpts,
}

#[derive(Args, Debug, Clone)]
pub struct O2hArgs {
    #[arg(long, env = "SHUFFLESIM_N", default_value_t = 2)]
    pub n: usize,
    #[arg(long, env = "SHUFFLESIM_D", default_value = "1-2")]
    pub d: IntRange,
    /// (oracle, hidden sets) pairs per O2H check.
    #[arg(long, env = "SHUFFLESIM_SAMPLES", default_value_t = 100)]
    pub samples: usize,
    #[arg(long, env = "SHUFFLESIM_PROBE", value_enum, default_value_t = ProbeArg::SolverStep)]
    pub probe: ProbeArg,
    /// Hidden-set resamples for the finding bound.
    #[arg(long, env = "SHUFFLESIM_RESAMPLES", default_value_t = 1000)]
    pub resamples: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProbeArg {
    SolverStep,
    UniformDomain,
    BelowLevel,
}

impl From<ProbeArg> for O2hProbe {
    fn from(p: ProbeArg) -> Self {
        match p {
            ProbeArg::SolverStep => O2hProbe::SolverStep,
            ProbeArg::UniformDomain => O2hProbe::UniformDomain,
            ProbeArg::BelowLevel => O2hProbe::BelowLevel,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[arg(long, env = "SHUFFLESIM_N", default_value = "2-3")]
    pub n: IntRange,
    #[arg(long, env = "SHUFFLESIM_D", default_value = "1-2")]
    pub d: IntRange,
    #[arg(
        long,
        env = "SHUFFLESIM_ADVERSARIES",
        value_enum,
        value_delimiter = ',',
        default_value = "solver-cq,truncated,classical"
    )]
    pub adversaries: Vec<AdversaryKind>,
    #[command(flatten)]
    pub opts: AdversaryOpts,
}

#[derive(Args, Debug, Clone)]
pub struct SampleOracleArgs {
    #[arg(long, env = "SHUFFLESIM_N", default_value_t = 2)]
    pub n: usize,
    #[arg(long, env = "SHUFFLESIM_D", default_value_t = 1)]
    pub d: usize,
    #[arg(long, env = "SHUFFLESIM_KIND", value_enum, default_value_t = KindArg::Simon)]
    pub kind: KindArg,
    /// Extra random level-d point queries appended to the transcript.
    #[arg(long, env = "SHUFFLESIM_POINTS", default_value_t = 4)]
    pub points: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Simon,
    OneToOne,
}

/// Ledger totals over a cell.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub oracle_layers: u64,
    pub circuits: u64,
    pub classical_queries: u64,
    pub core_evaluations: u64,
    pub violations: u64,
}

impl LedgerSummary {
    fn add(&mut self, l: &DepthLedger) {
        self.oracle_layers += l.total_oracle_layers;
        self.circuits += l.circuits_invoked;
        self.classical_queries += l.classical_queries;
        self.core_evaluations += l.core_evaluations;
        self.violations += l.violations.len() as u64;
    }
}

/// One row of results. `ledger` and `details` appear in JSON only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub n: usize,
    pub d: usize,
    pub adversary: String,
    pub trials: usize,
    pub success: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Oracle layers per circuit invoked.
    pub oracle_layers_mean: f64,
    /// Classical queries per trial.
    pub classical_queries_mean: f64,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ledger: Option<LedgerSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    experiment: &'a str,
    n: usize,
    d: usize,
    adversary: &'a str,
    trials: usize,
    success: f64,
    ci_lo: f64,
    ci_hi: f64,
    oracle_layers_mean: f64,
    classical_queries_mean: f64,
    seconds: f64,
}

struct TrialOutcome {
    success: bool,
    ledger: DepthLedger,
}

struct Clock {
    start: Option<Instant>,
}

impl Clock {
    fn start(enabled: bool) -> Self {
        Self {
            start: enabled.then(Instant::now),
        }
    }

    fn seconds(&self) -> f64 {
        self.start.map_or(0.0, |s| s.elapsed().as_secs_f64())
    }
}

fn summarize(
    experiment: &str,
    n: usize,
    d: usize,
    adversary: &str,
    outcomes: Vec<Result<TrialOutcome>>,
    clock: &Clock,
) -> Result<ResultRecord> {
    let trials = outcomes.len();
    let mut wins = 0;
    let mut sum = LedgerSummary::default();
    for o in outcomes {
        let o = o?;
        wins += usize::from(o.success);
        sum.add(&o.ledger);
    }
    let est = wilson_interval(wins, trials);
    Ok(ResultRecord {
        experiment: experiment.to_string(),
        n,
        d,
        adversary: adversary.to_string(),
        trials,
        success: est.rate,
        ci_lo: est.ci_lo,
        ci_hi: est.ci_hi,
        oracle_layers_mean: if sum.circuits == 0 {
            0.0
        } else {
            sum.oracle_layers as f64 / sum.circuits as f64
        },
        classical_queries_mean: sum.classical_queries as f64 / trials.max(1) as f64,
        seconds: clock.seconds(),
        ledger: Some(sum),
        details: None,
    })
}

fn sample_instance(task: Task, n: usize, rng: &mut ChaCha8Rng) -> Result<SimonInstance> {
    Ok(match task {
        Task::Search => sample_simon(n, rng)?,
        Task::Decision => sample_decision_instance(n, rng)?,
    })
}

fn judge(guess: &Guess, inst: &SimonInstance) -> bool {
    match guess {
        Guess::Shift(s) => inst.shift() == Some(*s),
        Guess::Kind(k) => *k == inst.kind(),
        Guess::Abstain => false,
    }
}

// Stable labels so each cell draws from its own stream.
const LABEL_SOLVE: u64 = 1;
const LABEL_ADVERSARY: u64 = 2;
const LABEL_O2H: u64 = 3;
const LABEL_ORACLE: u64 = 4;

fn cell_seed(seed: u64, labels: &[u64]) -> u64 {
    stream_seed(seed, labels)
}

pub fn cmd_solve(common: &CommonArgs, args: &SolveArgs) -> Result<Vec<ResultRecord>> {
    let task: Task = args.task.into();
    let opts = SolverOptions {
        schedule: args.schedule.into(),
        ..SolverOptions::default()
    };
    let mut out = Vec::new();
    for &n in &args.n.0 {
        for &d in &args.d.0 {
            let clock = Clock::start(common.record_time);
            let seed = cell_seed(common.seed, &[LABEL_SOLVE, task as u64, n as u64, d as u64]);
            let outcomes = run_trials(common.trials, seed, common.mode(), |_, rng| -> Result<TrialOutcome> {
                let inst = sample_instance(task, n, rng)?;
                let oracle = sample_shuffling(inst.clone(), d, rng, SampleOptions::with_backend(common.backend))?;
                match task {
                    Task::Search => {
                        let cap = args.rounds.unwrap_or(4 * n + 20);
                        match solve_search_with(&oracle, cap, opts, rng) {
                            Ok(rep) => Ok(TrialOutcome {
                                success: inst.shift() == Some(rep.shift),
                                ledger: rep.ledger,
                            }),
                            Err(crate::solver::SolverError::RankDeficiency { .. }) => Ok(TrialOutcome {
                                success: false,
                                ledger: DepthLedger::new(),
                            }),
                            Err(e) => Err(e.into()),
                        }
                    }
                    Task::Decision => {
                        let rounds = args.rounds.unwrap_or_else(|| default_decision_rounds(n));
                        let rep = solve_decision_with(&oracle, rounds, opts, rng)?;
                        Ok(TrialOutcome {
                            success: rep.decision == inst.kind(),
                            ledger: rep.ledger,
                        })
                    }
                }
            });
            let name = match task {
                Task::Search => "solve_search",
                Task::Decision => "solve_decision",
            };
            out.push(summarize(name, n, d, "solver", outcomes, &clock)?);
        }
    }
    Ok(out)
}

fn adversary_trial(
    kind: AdversaryKind,
    opts: &AdversaryOpts,
    backend: BackendKind,
    n: usize,
    d: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TrialOutcome> {
    let task: Task = match kind {
        AdversaryKind::Classical => Task::Search,
        AdversaryKind::Truncated | AdversaryKind::Violator => Task::Decision,
        _ => opts.task.into(),
    };
    let inst = sample_instance(task, n, rng)?;
    let oracle = sample_shuffling(inst.clone(), d, rng, SampleOptions::with_backend(backend))?;
    let solver_depth = 2 * d as u64 + 1;
    let depth = |default: u64| opts.budget_depth.unwrap_or(default).max(1);
    let run: SchemeRun<Guess> = match kind {
        AdversaryKind::SolverCq => {
            let b = SchemeBudget::new(depth(solver_depth), 100_000, 100_000)?;
            run_d_cq(&mut SolverCq::new(task, n), &oracle, b, rng)
        }
        AdversaryKind::SolverQc => {
            let b = SchemeBudget::new(depth(solver_depth), 1, 100_000)?;
            run_d_qc(&mut SolverQc::new(task, n), &oracle, b, rng)
        }
        AdversaryKind::Classical => classical_collision_adversary(&oracle, opts.q, rng),
        AdversaryKind::Truncated => {
            let probes = opts.probes.unwrap_or(n + 10);
            let b = SchemeBudget::new(depth(d as u64), probes.max(1) as u64, 1)?;
            run_d_cq(&mut TruncatedQuantum { probes }, &oracle, b, rng)
        }
        AdversaryKind::Violator => {
            let b = SchemeBudget::new(depth(d as u64), 1, 1)?;
            run_d_cq(&mut DepthViolator, &oracle, b, rng)
        }
    };
    let success = match &run.outcome {
        Ok(g) => judge(g, &inst),
        Err(_) => false,
    };
    Ok(TrialOutcome {
        success,
        ledger: run.ledger,
    })
}

fn adversary_cell(
    common: &CommonArgs,
    kind: AdversaryKind,
    opts: &AdversaryOpts,
    n: usize,
    d: usize,
) -> Result<ResultRecord> {
    let clock = Clock::start(common.record_time);
    let seed = cell_seed(common.seed, &[LABEL_ADVERSARY, kind as u64, n as u64, d as u64]);
    let outcomes = run_trials(common.trials, seed, common.mode(), |_, rng| {
        adversary_trial(kind, opts, common.backend, n, d, rng)
    });
    summarize("adversary", n, d, kind.name(), outcomes, &clock)
}

pub fn cmd_adversary(common: &CommonArgs, args: &AdversaryArgs) -> Result<Vec<ResultRecord>> {
    let mut out = Vec::new();
    for &n in &args.n.0 {
        for &d in &args.d.0 {
            out.push(adversary_cell(common, args.kind, &args.opts, n, d)?);
        }
    }
    Ok(out)
}

pub fn cmd_sweep(common: &CommonArgs, args: &SweepArgs) -> Result<Vec<ResultRecord>> {
    let mut out = Vec::new();
    for &n in &args.n.0 {
        for &d in &args.d.0 {
            for &kind in &args.adversaries {
                let mut rec = adversary_cell(common, kind, &args.opts, n, d)?;
                rec.experiment = "sweep".to_string();
                out.push(rec);
            }
        }
    }
    Ok(out)
}

fn bare_record(experiment: &str, n: usize, d: usize, adversary: &str, trials: usize, success: f64) -> ResultRecord {
    let est = wilson_interval((success * trials as f64).round() as usize, trials);
    ResultRecord {
        experiment: experiment.to_string(),
        n,
        d,
        adversary: adversary.to_string(),
        trials,
        success,
        ci_lo: est.ci_lo.min(success),
        ci_hi: est.ci_hi.max(success),
        oracle_layers_mean: 0.0,
        classical_queries_mean: 0.0,
        seconds: 0.0,
        ledger: None,
        details: None,
    }
}

pub fn cmd_o2h(common: &CommonArgs, args: &O2hArgs) -> Result<Vec<ResultRecord>> {
    let n = args.n;
    let probe: O2hProbe = args.probe.into();
    let mut out = Vec::new();
    for &d in &args.d.0 {
        if d == 0 {
            bail!("o2h checks need d >= 1");
        }
        let clock = Clock::start(common.record_time);
        let seed = cell_seed(common.seed, &[LABEL_O2H, n as u64, d as u64]);
        let pairs = sample_o2h_pairs(n, d, args.samples, seed, common.mode())?;
        for ell in 1..=d {
            let rep = check_o2h(&pairs, ell, probe)?;
            let mut rec = bare_record(
                &format!("o2h_l{ell}"),
                n,
                d,
                "shadow",
                rep.samples,
                rep.per_sample_pass as f64 / rep.samples.max(1) as f64,
            );
            rec.seconds = clock.seconds();
            rec.details = Some(serde_json::to_value(&rep)?);
            out.push(rec);
        }
        // Finding bound on one fixed oracle, hidden sets resampled.
        let mut rng = stream_rng(seed, &[1]);
        let inst = sample_decision_instance(n, &mut rng)?;
        let oracle = sample_shuffling(inst, d, &mut rng, SampleOptions::materialized())?;
        for q in [1usize, 2, 4] {
            let rep = check_find_bound(&oracle, 1, q, StateSource::Fixed, args.resamples, &mut rng)?;
            let mut rec = bare_record(&format!("find_q{q}"), n, d, "fixed_state", rep.resamples, rep.mean);
            rec.seconds = clock.seconds();
            rec.details = Some(serde_json::to_value(&rep)?);
            out.push(rec);
        }
        for ell in 1..=d {
            let q = MembershipQuery {
                n,
                d,
                j: d,
                ell,
                point: MembershipPoint::Fixed((1u64 << ((d + 2) * n)) - 1),
            };
            let est = estimate_membership(q, common.trials, stream_seed(seed, &[2, ell as u64]), common.mode())?;
            let mut rec = bare_record(
                &format!("membership_l{ell}"),
                n,
                d,
                "hidden_sets",
                est.conditioned,
                est.estimate.rate,
            );
            rec.ci_lo = est.estimate.ci_lo;
            rec.ci_hi = est.estimate.ci_hi;
            rec.seconds = clock.seconds();
            rec.details = Some(serde_json::to_value(&est)?);
            out.push(rec);
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct OracleDump {
    n: usize,
    d: usize,
    instance: SimonInstance,
    level_sets: Vec<Vec<u64>>,
    hidden_set_sizes: Vec<Vec<usize>>,
    transcript: crate::oracle::Transcript,
}

pub fn cmd_sample_oracle(common: &CommonArgs, args: &SampleOracleArgs) -> Result<String> {
    if common.format != Format::Json {
        bail!("sample-oracle only writes JSON");
    }
    let mut rng = stream_rng(common.seed, &[LABEL_ORACLE, args.n as u64, args.d as u64]);
    let inst = match args.kind {
        KindArg::Simon => sample_simon(args.n, &mut rng)?,
        KindArg::OneToOne => sample_one_to_one(args.n, &mut rng)?,
    };
    let oracle = sample_shuffling(inst.clone(), args.d, &mut rng, SampleOptions::materialized())
        .context("sample-oracle needs a materialized oracle")?;
    let hidden = sample_hidden_sets(&oracle, &mut rng)?;
    let rec = RecordingOracle::new(&oracle);
    for x0 in 0..1u64 << args.n {
        rec.path(x0)?;
    }
    let size = 1u64 << oracle.params().domain_bits();
    for _ in 0..args.points {
        rec.query(args.d, rng.gen_range(0..size))?;
    }
    let dump = OracleDump {
        n: args.n,
        d: args.d,
        instance: inst,
        level_sets: oracle.level_sets()?.sets,
        hidden_set_sizes: (1..=args.d)
            .map(|ell| (ell..=args.d).map(|j| hidden.size(ell, j)).collect())
            .collect(),
        transcript: rec.transcript(),
    };
    Ok(serde_json::to_string_pretty(&dump)? + "\n")
}

pub fn render(records: &[ResultRecord], format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(records)? + "\n"),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            if records.is_empty() {
                w.write_record(CSV_HEADER.split(','))?;
            }
            for r in records {
                w.serialize(CsvRow {
                    experiment: &r.experiment,
                    n: r.n,
                    d: r.d,
                    adversary: &r.adversary,
                    trials: r.trials,
                    success: r.success,
                    ci_lo: r.ci_lo,
                    ci_hi: r.ci_hi,
                    oracle_layers_mean: r.oracle_layers_mean,
                    classical_queries_mean: r.classical_queries_mean,
                    seconds: r.seconds,
                })?;
            }
            Ok(String::from_utf8(w.into_inner()?)?)
        }
    }
}

/// Runs one command and returns the text it writes.
pub fn execute(cli: &Cli) -> Result<String> {
    let c = &cli.common;
    if c.trials == 0 {
        bail!("--trials must be at least 1");
    }
    let records = match &cli.command {
        Command::Solve(a) => cmd_solve(c, a)?,
        Command::Adversary(a) => cmd_adversary(c, a)?,
        Command::O2h(a) => cmd_o2h(c, a)?,
        Command::Sweep(a) => cmd_sweep(c, a)?,
        Command::SampleOracle(a) => return cmd_sample_oracle(c, a),
    };
    render(&records, c.format)
}

pub fn run(cli: Cli) -> Result<()> {
    let text = execute(&cli)?;
    match &cli.common.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> Cli {
        let mut v = vec!["shufflesim"];
        v.extend_from_slice(args);
        Cli::try_parse_from(v).unwrap()
    }

    #[test]
    fn ranges_parse() {
        assert_eq!("3".parse::<IntRange>().unwrap().0, vec![3]);
        assert_eq!("2-4".parse::<IntRange>().unwrap().0, vec![2, 3, 4]);
        assert_eq!("1,3-4".parse::<IntRange>().unwrap().0, vec![1, 3, 4]);
        assert!("4-2".parse::<IntRange>().is_err());
        assert!("x".parse::<IntRange>().is_err());
    }

    #[test]
    fn csv_header_is_fixed() {
        let c = cli(&["--trials", "5", "--format", "csv", "solve", "--n", "2", "--d", "0-1"]);
        let text = execute(&c).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.count(), 2);
        assert_eq!(render(&[], Format::Csv).unwrap().trim(), CSV_HEADER);
    }

    #[test]
    fn solve_record_reports_depth() {
        let c = cli(&["--trials", "20", "solve", "--n", "3", "--d", "2"]);
        let recs: Vec<ResultRecord> = serde_json::from_str(&execute(&c).unwrap()).unwrap();
        assert_eq!(recs[0].oracle_layers_mean, 5.0);
        assert_eq!(recs[0].success, 1.0);
        assert_eq!(recs[0].seconds, 0.0);
    }

    #[test]
    fn violator_is_recorded() {
        let c = cli(&[
            "--trials",
            "3",
            "adversary",
            "--kind",
            "violator",
            "--n",
            "2",
            "--d",
            "1",
        ]);
        let recs: Vec<ResultRecord> = serde_json::from_str(&execute(&c).unwrap()).unwrap();
        assert_eq!(recs[0].success, 0.0);
        assert_eq!(recs[0].ledger.as_ref().unwrap().violations, 3);
    }

    #[test]
    fn sweep_cardinality() {
        let c = cli(&[
            "--trials",
            "4",
            "sweep",
            "--n",
            "2-3",
            "--d",
            "1-2",
            "--adversaries",
            "solver-cq,truncated",
        ]);
        let recs: Vec<ResultRecord> = serde_json::from_str(&execute(&c).unwrap()).unwrap();
        assert_eq!(recs.len(), 8);
    }

    #[test]
    fn sample_oracle_dump() {
        let c = cli(&["sample-oracle", "--n", "2", "--d", "1"]);
        let v: serde_json::Value = serde_json::from_str(&execute(&c).unwrap()).unwrap();
        assert_eq!(v["level_sets"].as_array().unwrap().len(), 2);
        assert_eq!(v["hidden_set_sizes"][0][0], 16);
        let c = cli(&["--format", "csv", "sample-oracle"]);
        assert!(execute(&c).is_err());
    }
}
