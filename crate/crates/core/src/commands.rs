//! Command-line surface. Every subcommand writes its CSV and JSON reports
//! into the output directory and returns a one-line summary.
//!
//! Reports embed the invocation's parameters and resolved seeds, and are
//! byte-identical across reruns; CPU timings go to separate `timing` files.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::compare::{
    compare_sources, synthetic_pairs, ComparisonRow, ComparisonSummary, PairConfig,
};
use crate::cputime;
use crate::error::{Error, Result};
use crate::io;
use crate::ranking::{
    run_protocol, ProtocolConfig, ProtocolReport, ProtocolSummary, RankingConfig,
};
use crate::search::{self, MetricResult, ProbeRecord, SearchConfig, SearchMethod};
use crate::seeds;
use crate::synth::{generate_family, Family, FamilyConfig};
use crate::theorem::{
    convergence_sweep, BoundedDensity, ConvergenceTable, TheoremRunConfig, ValMode,
};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "QUANTRANK_OUT";
const DEFAULT_OUT_DIR: &str = "quantrank-out";

#[derive(Debug, Parser)]
#[command(
    name = "quantrank",
    version,
    about = "Score and rank source classifiers by transferability"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score one source from its train and val dumps.
    Score(ScoreArgs),
    /// Score every source in a directory and rank them.
    Rank(RankArgs),
    /// Training and validation accuracy over a range of levels.
    Sweep(SweepArgs),
    /// Convergence of validation accuracy to 1/2 at fine levels.
    SimulateTheorem(TheoremArgs),
    /// Write a synthetic family of source dumps with ground truth.
    GenSynth(GenSynthArgs),
    /// Ternary against exhaustive search.
    CompareSearch(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory [default: $QUANTRANK_OUT or ./quantrank-out]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl OutArgs {
    pub fn dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SearchArgs {
    /// Stop once the bracket is this narrow.
    #[arg(long, default_value_t = 5)]
    pub tolerance: u64,
    #[arg(long, default_value_t = 20)]
    pub max_steps: u32,
    #[arg(long, default_value_t = 2)]
    pub q_min: u64,
    /// Upper level [default: validation samples per class]
    #[arg(long)]
    pub q_max: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SearchArgs {
    pub fn config(&self) -> SearchConfig {
        SearchConfig {
            tolerance: self.tolerance,
            max_steps: self.max_steps,
            q_min: self.q_min,
            q_max: self.q_max,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Ternary,
    Brute,
}

impl From<MethodArg> for SearchMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Ternary => SearchMethod::Ternary,
            MethodArg::Brute => SearchMethod::Brute,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScoreArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Ternary)]
    pub search: MethodArg,
    #[command(flatten)]
    pub search_args: SearchArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RankArgs {
    /// Directory of `<id>_train.csv` / `<id>_val.csv` dumps.
    #[arg(long)]
    pub sources: PathBuf,
    /// `source_id,accuracy` table; enables ranking evaluation.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0.9)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0.03)]
    pub slack: f64,
    /// Share of each dump used per iteration.
    #[arg(long, default_value_t = 1.0)]
    pub tl_frac: f64,
    #[arg(long, default_value_t = 1)]
    pub iterations: u32,
    #[arg(long, value_enum, default_value_t = MethodArg::Ternary)]
    pub search: MethodArg,
    #[command(flatten)]
    pub search_args: SearchArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub q_min: u64,
    /// Upper level [default: validation samples per class]
    #[arg(long)]
    pub q_max: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub step: u64,
    /// Seed for class balancing.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ValModeArg {
    Analytic,
    Sampled,
}

const DEFAULT_SCHEDULE: &str =
    "2,5,10,20,50,100,200,500,1000,2000,5000,10000,20000,50000,100000,200000,500000,1000000";

#[derive(Debug, Clone, Args, Serialize)]
pub struct TheoremArgs {
    /// Class-1 density: uniform, uniform:LO-HI, mix:W@LO-HI,..., power:K, power-reflected:K
    #[arg(long, default_value = "power:1")]
    pub f1: String,
    #[arg(long, default_value = "power-reflected:1")]
    pub f2: String,
    /// Training samples per class.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Comma-separated increasing levels.
    #[arg(long, default_value = DEFAULT_SCHEDULE)]
    pub q: String,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = ValModeArg::Analytic)]
    pub val_mode: ValModeArg,
    /// Validation samples per class in sampled mode.
    #[arg(long, default_value_t = 100)]
    pub n_val: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenSynthArgs {
    #[arg(long, default_value_t = 45)]
    pub count: usize,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 250)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0.9)]
    pub max_overlap: f64,
    /// bump | striped:K
    #[arg(long, default_value = "bump")]
    pub family: String,
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareArgs {
    /// Compare on these dumps instead of synthetic pairs.
    #[arg(long)]
    pub sources: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub pairs: usize,
    /// Samples per synthetic pair, train and val together.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    #[arg(long, default_value = "bump")]
    pub family: String,
    #[command(flatten)]
    pub search_args: SearchArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

#[derive(Serialize)]
struct ScoreReport<'a> {
    command: &'static str,
    manifest: &'a ScoreArgs,
    seeds: BalanceSeeds,
    source_id: String,
    result: &'a MetricResult,
}

#[derive(Serialize)]
struct BalanceSeeds {
    master: u64,
    balance_train: u64,
    balance_val: u64,
}

impl BalanceSeeds {
    fn new(master: u64) -> Self {
        BalanceSeeds {
            master,
            balance_train: seeds::derive(master, 1),
            balance_val: seeds::derive(master, 2),
        }
    }
}

#[derive(Serialize)]
struct Timing {
    cpu_seconds: f64,
}

fn trace_rows(trace: &[ProbeRecord]) -> Vec<Vec<String>> {
    trace
        .iter()
        .map(|p| vec![p.q.to_string(), num(p.train_acc), num(p.val_acc)])
        .collect()
}

pub fn run_score(args: &ScoreArgs) -> Result<String> {
    let out = args.out.dir();
    let train = io::read_dump(&args.train)?;
    let val = io::read_dump(&args.val)?;
    let cfg = args.search_args.config();
    let (result, cpu_seconds) =
        cputime::measure(|| search::metric(&train.data, &val.data, &cfg, args.search.into()));
    let result = result?;
    io::write_csv(
        out.join("trace.csv"),
        "trace",
        &["q", "train_acc", "val_acc"],
        &trace_rows(&result.trace),
    )?;
    io::write_json(
        out.join("score.json"),
        &ScoreReport {
            command: "score",
            manifest: args,
            seeds: BalanceSeeds::new(cfg.seed),
            source_id: train.header.source_id.clone(),
            result: &result,
        },
    )?;
    io::write_json(out.join("score.timing.json"), &Timing { cpu_seconds })?;
    Ok(format!(
        "score source={} M={:?} q*={} L={} R={} method={} probes={}",
        train.header.source_id,
        result.metric,
        result.q_star,
        result.final_left,
        result.final_right,
        result.method,
        result.evaluations()
    ))
}

#[derive(Serialize)]
struct RankOutput<'a> {
    command: &'static str,
    manifest: &'a RankArgs,
    seeds: RankSeeds,
    sources: usize,
    survivors: Option<usize>,
    #[serde(flatten)]
    summary: Option<&'a ProtocolSummary>,
    /// Mean fraction over iterations; mirrors the per-iteration field.
    fraction_correct: Option<f64>,
    protocol: &'a ProtocolReport,
}

#[derive(Serialize)]
struct RankSeeds {
    master: u64,
    iterations: Vec<u64>,
}

pub fn run_rank(args: &RankArgs) -> Result<String> {
    let out = args.out.dir();
    let sources = io::read_source_dir(&args.sources)?;
    let truth = args.truth.as_ref().map(io::read_truth).transpose()?;
    let cfg = ProtocolConfig {
        search: args.search_args.config(),
        method: args.search.into(),
        tl_frac: args.tl_frac,
        iterations: args.iterations,
        ranking: RankingConfig {
            threshold: args.threshold,
            slack: args.slack,
        },
        seed: args.search_args.seed,
    };
    let report = run_protocol(&sources, truth.as_ref(), &cfg)?;

    let ranks = crate::ranking::rank_sources(&report.mean_scores);
    let rows: Vec<Vec<String>> = report
        .mean_scores
        .iter()
        .zip(&ranks)
        .map(|(s, r)| {
            vec![
                s.source_id.clone(),
                num(s.metric),
                s.q_star.to_string(),
                r.to_string(),
                opt_num(truth.as_ref().and_then(|t| t.get(&s.source_id))),
            ]
        })
        .collect();
    io::write_csv(
        out.join("scores.csv"),
        "scores",
        &["source_id", "metric", "q_star", "rank", "truth"],
        &rows,
    )?;
    let timing: Vec<Vec<String>> = report
        .mean_scores
        .iter()
        .map(|s| vec![s.source_id.clone(), num(s.cpu_seconds)])
        .collect();
    io::write_csv(
        out.join("rank.timing.csv"),
        "timing",
        &["source_id", "mean_cpu_seconds"],
        &timing,
    )?;

    let survivors = report
        .iterations
        .first()
        .and_then(|i| i.report.as_ref())
        .map(|r| r.source_ids.len());
    let summary = report.summary.as_ref();
    io::write_json(
        out.join("rank.json"),
        &RankOutput {
            command: "rank",
            manifest: args,
            seeds: RankSeeds {
                master: cfg.seed,
                iterations: report.iterations.iter().map(|i| i.seed).collect(),
            },
            sources: sources.len(),
            survivors,
            summary,
            fraction_correct: summary.map(|s| s.mean_fraction_correct),
            protocol: &report,
        },
    )?;
    let mut line = format!(
        "rank sources={} iterations={}",
        sources.len(),
        args.iterations
    );
    if let (Some(s), Some(k)) = (summary, survivors) {
        line.push_str(&format!(
            " survivors={k} fraction_correct={:.4} mean_dev={:.4} spearman={}",
            s.mean_fraction_correct,
            s.mean_dev,
            s.mean_spearman
                .map_or("undefined".into(), |v| format!("{v:.4}"))
        ));
    } else {
        let top = &report.mean_scores[ranks.iter().position(|&r| r == 1).unwrap_or(0)];
        line.push_str(&format!(" top={} M={:?}", top.source_id, top.metric));
    }
    Ok(line)
}

#[derive(Serialize)]
struct SweepReport<'a> {
    command: &'static str,
    manifest: &'a SweepArgs,
    seeds: BalanceSeeds,
    q_min: u64,
    q_max: u64,
    best_q: u64,
    best_val_acc: f64,
    points: &'a [ProbeRecord],
}

pub fn run_sweep(args: &SweepArgs) -> Result<String> {
    let out = args.out.dir();
    if args.step == 0 {
        return Err(Error::Config("step must be >= 1".into()));
    }
    let train = io::parse_dump(&args.train)?;
    let val = io::parse_dump(&args.val)?;
    let cfg = SearchConfig {
        q_min: args.q_min,
        q_max: args.q_max,
        seed: args.seed,
        ..SearchConfig::default()
    };
    let splits = search::prepare(&train, &val, &cfg)?;
    let levels: Vec<u64> = (splits.q_min..=splits.q_max)
        .step_by(args.step as usize)
        .collect();
    let points = search::sweep_curve(&splits.train, &splits.val, &levels)?;
    let best = points
        .iter()
        .fold(&points[0], |b, p| if p.val_acc > b.val_acc { p } else { b });
    io::write_csv(
        out.join("curve.csv"),
        "curve",
        &["q", "train_acc", "val_acc"],
        &trace_rows(&points),
    )?;
    io::write_json(
        out.join("sweep.json"),
        &SweepReport {
            command: "sweep",
            manifest: args,
            seeds: BalanceSeeds::new(args.seed),
            q_min: splits.q_min,
            q_max: splits.q_max,
            best_q: best.q,
            best_val_acc: best.val_acc,
            points: &points,
        },
    )?;
    Ok(format!(
        "sweep levels={} range=[{}, {}] best_q={} best_val_acc={:?}",
        points.len(),
        splits.q_min,
        splits.q_max,
        best.q,
        best.val_acc
    ))
}

#[derive(Serialize)]
struct TheoremReport<'a> {
    command: &'static str,
    manifest: &'a TheoremArgs,
    seeds: TrialSeeds,
    config: &'a TheoremRunConfig,
    table: &'a ConvergenceTable,
}

#[derive(Serialize)]
struct TrialSeeds {
    master: u64,
    trials: Vec<u64>,
}

fn parse_schedule(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("bad level `{t}` in schedule")))
        })
        .collect()
}

pub fn run_simulate_theorem(args: &TheoremArgs) -> Result<String> {
    let out = args.out.dir();
    let f1: BoundedDensity = args.f1.parse()?;
    let f2: BoundedDensity = args.f2.parse()?;
    let cfg = TheoremRunConfig {
        n: args.n,
        q_schedule: parse_schedule(&args.q)?,
        val_mode: match args.val_mode {
            ValModeArg::Analytic => ValMode::Analytic,
            ValModeArg::Sampled => ValMode::Sampled { n_val: args.n_val },
        },
        trials: args.trials,
        epsilon: args.epsilon,
        delta: args.delta,
        seed: args.seed,
    };
    let table = convergence_sweep(&cfg, &f1, &f2)?;
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.q.to_string(),
                num(r.mean_val_acc),
                num(r.stderr),
                num(r.bound_q),
                r.satisfied.to_string(),
                num(r.mean_train_acc),
                num(r.violation_fraction),
            ]
        })
        .collect();
    io::write_csv(
        out.join("convergence.csv"),
        "convergence",
        &[
            "q",
            "mean_val_acc",
            "stderr",
            "bound_q",
            "satisfied",
            "mean_train_acc",
            "violation_fraction",
        ],
        &rows,
    )?;
    io::write_json(
        out.join("theorem.json"),
        &TheoremReport {
            command: "simulate-theorem",
            manifest: args,
            seeds: TrialSeeds {
                master: cfg.seed,
                trials: (0..cfg.trials as u64)
                    .map(|t| seeds::derive(cfg.seed, t))
                    .collect(),
            },
            config: &cfg,
            table: &table,
        },
    )?;
    let last = table.rows.last().expect("validated non-empty schedule");
    Ok(format!(
        "simulate-theorem B={} bound_q={:.1} q={} mean_val_acc={:.4} stderr={:.4} violation_fraction={}",
        table.bound, table.bound_q, last.q, last.mean_val_acc, last.stderr, last.violation_fraction
    ))
}

#[derive(Serialize)]
struct GenSynthReport<'a> {
    command: &'static str,
    manifest: &'a GenSynthArgs,
    config: &'a FamilyConfig,
    sources: Vec<GeneratedSource>,
}

#[derive(Serialize)]
struct GeneratedSource {
    source_id: String,
    overlap: f64,
    seed: u64,
    bayes_accuracy: f64,
}

pub fn run_gen_synth(args: &GenSynthArgs) -> Result<String> {
    let out = args.out.dir();
    let family: Family = args.family.parse()?;
    let cfg = FamilyConfig {
        count: args.count,
        m: args.m,
        n: args.n,
        per_class: args.per_class,
        max_overlap: args.max_overlap,
        family,
        val_fraction: args.val_fraction,
        seed: args.seed,
    };
    let specs = cfg.specs()?;
    let (dumps, truth) = generate_family(&specs, cfg.val_fraction)?;
    let files = io::write_source_dir(&out, &dumps)?;
    io::write_truth(out.join("truth.csv"), &truth)?;
    io::write_json(
        out.join("gen-synth.json"),
        &GenSynthReport {
            command: "gen-synth",
            manifest: args,
            config: &cfg,
            sources: specs
                .iter()
                .map(|(id, s)| GeneratedSource {
                    source_id: id.clone(),
                    overlap: s.overlap,
                    seed: s.seed,
                    bayes_accuracy: s.bayes_accuracy(),
                })
                .collect(),
        },
    )?;
    let good = truth.iter().filter(|(_, t)| *t > 0.9).count();
    Ok(format!(
        "gen-synth sources={} files={} above_0.9={} out={}",
        dumps.len(),
        files.len(),
        good,
        out.display()
    ))
}

#[derive(Serialize)]
struct CompareReport<'a> {
    command: &'static str,
    manifest: &'a CompareArgs,
    pair_seeds: Option<Vec<u64>>,
    summary: &'a ComparisonSummary,
    rows: &'a [ComparisonRow],
}

pub fn run_compare_search(args: &CompareArgs) -> Result<String> {
    let out = args.out.dir();
    let cfg = args.search_args.config();
    let (sources, pair_seeds) = match &args.sources {
        Some(dir) => (io::read_source_dir(dir)?, None),
        None => {
            let pc = PairConfig {
                pairs: args.pairs,
                m: args.m,
                n: args.n,
                samples: args.samples,
                val_fraction: args.val_fraction,
                family: args.family.parse()?,
                seed: cfg.seed,
            };
            let seeds = (0..pc.pairs as u64)
                .map(|i| seeds::derive(pc.seed, i))
                .collect();
            (synthetic_pairs(&pc)?, Some(seeds))
        }
    };
    let rows = compare_sources(&sources, &cfg)?;
    let summary = ComparisonSummary::from_rows(&rows);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.source_id.clone(),
                num(r.metric_ternary),
                num(r.metric_brute),
                num(r.abs_diff),
                r.q_ternary.to_string(),
                r.q_brute.to_string(),
                r.evaluations_ternary.to_string(),
                r.evaluations_brute.to_string(),
            ]
        })
        .collect();
    io::write_csv(
        out.join("compare.csv"),
        "compare",
        &[
            "source_id",
            "metric_ternary",
            "metric_brute",
            "abs_diff",
            "q_ternary",
            "q_brute",
            "evaluations_ternary",
            "evaluations_brute",
        ],
        &table,
    )?;
    io::write_json(
        out.join("compare.json"),
        &CompareReport {
            command: "compare-search",
            manifest: args,
            pair_seeds,
            summary: &summary,
            rows: &rows,
        },
    )?;
    Ok(format!(
        "compare-search pairs={} mean_abs_diff={:.4} std_abs_diff={:.4} max_abs_diff={:.4}",
        summary.pairs, summary.mean_abs_diff, summary.std_abs_diff, summary.max_abs_diff
    ))
}

pub fn run(command: &Command) -> Result<String> {
    match command {
        Command::Score(a) => run_score(a),
        Command::Rank(a) => run_rank(a),
        Command::Sweep(a) => run_sweep(a),
        Command::SimulateTheorem(a) => run_simulate_theorem(a),
        Command::GenSynth(a) => run_gen_synth(a),
        Command::CompareSearch(a) => run_compare_search(a),
    }
}

/// Parses the process arguments, runs the subcommand and returns the exit
/// code. Usage errors exit through clap with code 2.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
