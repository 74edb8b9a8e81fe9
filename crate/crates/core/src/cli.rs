//! Command-line front end: `analytic`, `simulate` and `compare`.
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 domain error,
//! 3 truncated simulation.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::analytic::{ClassMetrics, Metric, Mode};
use crate::scenario::{parse_scenario, Scenario};
use crate::sim::{self, PolicyConfig, RunConfig, WithinClassOrder, Workload};
use crate::stats::{self, ComparisonRow, SimulationReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DOMAIN: i32 = 2;
pub const EXIT_TRUNCATED: i32 = 3;

pub const COMPARE_CSV_HEADER: &str = "class,metric,analytic,sim_mean,sim_ci95,abs_err,rel_err,covered";
pub const ANALYTIC_CSV_HEADER: &str = "class,stable,p,u,h,g,w,v";
pub const SIMULATE_CSV_HEADER: &str = "class,metric,sim_mean,sim_ci95,reps";

const DEFAULT_JOBS: usize = 1_000_000;
const DEFAULT_WARMUP: f64 = 100.0;
const DEFAULT_SEED: u64 = 1;
const DEFAULT_REPS: usize = 10;
/// Default time cap, in mean interarrival times of the whole stream per
/// requested completion.
const DEFAULT_HORIZON_FACTOR: f64 = 100.0;

#[derive(Debug, Parser)]
#[command(name = "mgm-prio", version, about = "M/G/m LIFO preemptive-resume priority queue: formulas and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate closed-form per-class metrics
    Analytic(AnalyticArgs),
    /// Estimate per-class metrics by simulation
    Simulate(SimArgs),
    /// Put closed-form and simulated metrics side by side
    Compare(CompareArgs),
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Scenario file
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Debug, clap::Args)]
struct ModeArg {
    #[arg(long, value_enum, default_value_t = ModeFlag::Approx)]
    mode: ModeFlag,
}

#[derive(Debug, clap::Args)]
struct SimFlags {
    /// Counted completions per replication
    #[arg(long)]
    jobs: Option<usize>,
    /// Warm-up time; jobs arriving earlier are not counted
    #[arg(long)]
    warmup: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Simulated-time cap per replication
    #[arg(long)]
    max_time: Option<f64>,
    #[arg(long, value_enum)]
    within_class: Option<OrderFlag>,
    /// Forbid an arrival from displacing a job of its own class
    #[arg(long)]
    strict_preemption: bool,
}

#[derive(Debug, clap::Args)]
struct AnalyticArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    mode: ModeArg,
}

#[derive(Debug, clap::Args)]
struct SimArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    sim: SimFlags,
    /// Also dump the job records of the first replication as CSV
    #[arg(long)]
    records: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    mode: ModeArg,
    #[command(flatten)]
    sim: SimFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeFlag {
    Approx,
    #[value(name = "exact-m1")]
    ExactM1,
    #[value(name = "exact-mm-identical")]
    ExactMmIdentical,
}

impl From<ModeFlag> for Mode {
    fn from(m: ModeFlag) -> Self {
        match m {
            ModeFlag::Approx => Mode::Approx,
            ModeFlag::ExactM1 => Mode::ExactSingleChannel,
            ModeFlag::ExactMmIdentical => Mode::ExactMmmIdentical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OrderFlag {
    Lifo,
    Fifo,
}

/// Error with its exit status.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn domain(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DOMAIN,
            message: message.into(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::usage(e.to_string())
    }
}

/// Runs the tool on `args` (including the program name) and returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_USAGE;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    let result = match &cli.command {
        Command::Analytic(a) => analytic(a, out),
        Command::Simulate(a) => simulate(a, out, err),
        Command::Compare(a) => compare(a, out, err),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn load(common: &Common) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Failure::usage(format!("{}: {e}", common.config.display())))?;
    parse_scenario(&text).map_err(|e| Failure::usage(format!("{}: {e}", common.config.display())))
}

fn evaluate(scenario: &Scenario, mode: ModeFlag) -> Result<Vec<Option<ClassMetrics>>, Failure> {
    Mode::from(mode)
        .evaluate(&scenario.model)
        .map_err(|e| Failure::domain(e.to_string()))
}

struct SimPlan {
    policy: PolicyConfig,
    cfg: RunConfig,
    reps: usize,
}

fn plan(scenario: &Scenario, flags: &SimFlags) -> Result<SimPlan, Failure> {
    let mut policy = scenario.policy.unwrap_or_default();
    if let Some(order) = flags.within_class {
        policy.within_class_order = match order {
            OrderFlag::Lifo => WithinClassOrder::Lifo,
            OrderFlag::Fifo => WithinClassOrder::Fifo,
        };
    }
    if flags.strict_preemption {
        policy.equal_class_preemption = false;
    }
    let jobs = flags.jobs.or(scenario.run.jobs).unwrap_or(DEFAULT_JOBS);
    let warmup = flags.warmup.or(scenario.run.warmup).unwrap_or(DEFAULT_WARMUP);
    let seed = flags.seed.or(scenario.run.seed).unwrap_or(DEFAULT_SEED);
    let reps = flags.reps.or(scenario.run.reps).unwrap_or(DEFAULT_REPS);
    if jobs == 0 {
        return Err(Failure::usage("--jobs must be > 0"));
    }
    if !(warmup >= 0.0 && warmup.is_finite()) {
        return Err(Failure::usage("--warmup must be a finite number >= 0"));
    }
    if reps < 2 {
        return Err(Failure::usage("--reps must be >= 2"));
    }
    let total_rate: f64 = scenario.model.classes().iter().map(|c| c.lambda).sum();
    let max_simulated_time = flags
        .max_time
        .unwrap_or(warmup + DEFAULT_HORIZON_FACTOR * jobs as f64 / total_rate);
    Ok(SimPlan {
        policy,
        cfg: RunConfig {
            seed,
            warmup_time: warmup,
            target_completions: jobs,
            max_simulated_time,
        },
        reps,
    })
}

fn simulate_report(scenario: &Scenario, plan: &SimPlan, err: &mut dyn Write) -> Result<SimulationReport, Failure> {
    let report = stats::replicate(&scenario.model, &plan.policy, &plan.cfg, plan.reps)
        .map_err(|e| Failure::domain(e.to_string()))?;
    let _ = writeln!(
        err,
        "# {} replications x {} jobs in {:.2?}",
        plan.reps, plan.cfg.target_completions, report.meta.wall_clock
    );
    if report.truncated() {
        let _ = writeln!(
            err,
            "warning: {} of {} replications hit the time cap {} before {} completions",
            report.meta.truncated_reps, plan.reps, plan.cfg.max_simulated_time, plan.cfg.target_completions
        );
    }
    Ok(report)
}

fn exit_for(report: &SimulationReport) -> i32 {
    if report.truncated() {
        EXIT_TRUNCATED
    } else {
        EXIT_OK
    }
}

fn analytic(args: &AnalyticArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let scenario = load(&args.common)?;
    let metrics = evaluate(&scenario, args.mode.mode)?;
    match args.common.format {
        Format::Table => render_analytic_table(out, &metrics)?,
        Format::Csv => render_analytic_csv(out, &metrics)?,
    }
    Ok(EXIT_OK)
}

fn simulate(args: &SimArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let scenario = load(&args.common)?;
    let plan = plan(&scenario, &args.sim)?;
    let report = simulate_report(&scenario, &plan, err)?;
    match args.common.format {
        Format::Table => render_report_table(out, &report)?,
        Format::Csv => render_report_csv(out, &report)?,
    }
    if let Some(path) = &args.records {
        let cfg = RunConfig {
            seed: report.meta.seeds[0],
            ..plan.cfg
        };
        let run = sim::run(&scenario.model, &plan.policy, &Workload::Stochastic(cfg))
            .map_err(|e| Failure::domain(e.to_string()))?;
        let file = fs::File::create(path)?;
        sim::write_records_csv(io::BufWriter::new(file), &run.records)?;
    }
    Ok(exit_for(&report))
}

fn compare(args: &CompareArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let scenario = load(&args.common)?;
    let metrics = evaluate(&scenario, args.mode.mode)?;
    let plan = plan(&scenario, &args.sim)?;
    let report = simulate_report(&scenario, &plan, err)?;
    let rows = stats::compare(&report, &metrics);
    match args.common.format {
        Format::Table => render_compare_table(out, &rows)?,
        Format::Csv => render_compare_csv(out, &rows)?,
    }
    Ok(exit_for(&report))
}

/// Fixed-point with 6 significant digits; scientific outside `[1e-6, 1e7)`.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-6..7).contains(&exp) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding can carry into a new digit (9.999995 -> 10.00000)
    let digits = s.chars().filter(char::is_ascii_digit).skip_while(|&c| c == '0').count();
    if digits > 6 && decimals > 0 {
        format!("{x:.prec$}", prec = decimals - 1)
    } else {
        s
    }
}

fn opt6(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), sig6)
}

fn opt_full(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn render_analytic_table(out: &mut dyn Write, metrics: &[Option<ClassMetrics>]) -> io::Result<()> {
    write!(out, "{:>5}", "class")?;
    for m in Metric::ALL {
        write!(out, " {:>14}", m.name())?;
    }
    writeln!(out)?;
    for (i, x) in metrics.iter().enumerate() {
        write!(out, "{:>5}", i + 1)?;
        match x {
            Some(x) => {
                for m in Metric::ALL {
                    write!(out, " {:>14}", sig6(x.get(m)))?;
                }
                writeln!(out)?;
            }
            None => writeln!(out, " UNSTABLE")?,
        }
    }
    Ok(())
}

fn render_analytic_csv(out: &mut dyn Write, metrics: &[Option<ClassMetrics>]) -> io::Result<()> {
    writeln!(out, "{ANALYTIC_CSV_HEADER}")?;
    for (i, x) in metrics.iter().enumerate() {
        match x {
            Some(x) => {
                write!(out, "{},true", i + 1)?;
                for m in Metric::ALL {
                    write!(out, ",{}", x.get(m))?;
                }
                writeln!(out)?;
            }
            None => writeln!(out, "{},false,,,,,,", i + 1)?,
        }
    }
    Ok(())
}

fn render_report_table(out: &mut dyn Write, report: &SimulationReport) -> io::Result<()> {
    writeln!(out, "{:>5} {:>6} {:>14} {:>14} {:>5}", "class", "metric", "estimate", "ci95", "reps")?;
    for (i, class) in report.classes.iter().enumerate() {
        let Some(class) = class else {
            writeln!(out, "{:>5} no counted jobs", i + 1)?;
            continue;
        };
        for m in Metric::ALL {
            match class.get(m) {
                Some(e) => writeln!(
                    out,
                    "{:>5} {:>6} {:>14} {:>14} {:>5}",
                    i + 1,
                    m.name(),
                    sig6(e.mean),
                    sig6(e.half_width),
                    e.reps
                )?,
                None => writeln!(out, "{:>5} {:>6} {:>14} {:>14} {:>5}", i + 1, m.name(), "-", "-", 0)?,
            }
        }
    }
    Ok(())
}

fn render_report_csv(out: &mut dyn Write, report: &SimulationReport) -> io::Result<()> {
    writeln!(out, "{SIMULATE_CSV_HEADER}")?;
    for (i, class) in report.classes.iter().enumerate() {
        for m in Metric::ALL {
            let e = class.as_ref().and_then(|c| c.get(m));
            writeln!(
                out,
                "{},{},{},{},{}",
                i + 1,
                m.name(),
                opt_full(e.map(|e| e.mean)),
                opt_full(e.map(|e| e.half_width)),
                e.map_or(0, |e| e.reps)
            )?;
        }
    }
    Ok(())
}

fn covered_text(c: Option<bool>) -> &'static str {
    match c {
        Some(true) => "true",
        Some(false) => "false",
        None => "",
    }
}

fn render_compare_table(out: &mut dyn Write, rows: &[ComparisonRow]) -> io::Result<()> {
    writeln!(
        out,
        "{:>5} {:>6} {:>14} {:>14} {:>14} {:>14} {:>14} {:>8}",
        "class", "metric", "analytic", "sim_mean", "sim_ci95", "abs_err", "rel_err", "covered"
    )?;
    for r in rows {
        let analytic = if r.analytic.is_none() {
            "UNSTABLE".to_string()
        } else {
            opt6(r.analytic)
        };
        writeln!(
            out,
            "{:>5} {:>6} {:>14} {:>14} {:>14} {:>14} {:>14} {:>8}",
            r.class + 1,
            r.metric.name(),
            analytic,
            opt6(r.sim_mean),
            opt6(r.sim_ci95),
            opt6(r.abs_err),
            opt6(r.rel_err),
            match r.covered {
                None => "-",
                Some(c) => covered_text(Some(c)),
            }
        )?;
    }
    Ok(())
}

fn render_compare_csv(out: &mut dyn Write, rows: &[ComparisonRow]) -> io::Result<()> {
    writeln!(out, "{COMPARE_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.class + 1,
            r.metric.name(),
            opt_full(r.analytic),
            opt_full(r.sim_mean),
            opt_full(r.sim_ci95),
            opt_full(r.abs_err),
            opt_full(r.rel_err),
            covered_text(r.covered)
        )?;
    }
    Ok(())
}
