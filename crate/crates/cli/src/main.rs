//! `dynsc`: replay update streams through the dynamic submodular cover
//! structure, generate streams and instances, and run the static baselines.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::bail;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use dynsc::baselines;
use dynsc::harness::{
    self, CoverageShape, ExperimentConfig, ReportFormat, StreamKind, StreamParams,
};
use dynsc::levels::{LevelParams, SampleMode, DEFAULT_PRACTICAL_TRIALS};
use dynsc::oracle::{load_instance, ElementId};
use dynsc::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_INVARIANT: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "dynsc",
    version,
    about = "Fully dynamic weighted submodular cover"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a stream and write per-update metrics.
    Run(RunArgs),
    /// Replay a stream with invariant checks after every update.
    Verify(VerifyArgs),
    /// Generate an update stream.
    GenStream(GenStreamArgs),
    /// Generate a random weighted coverage instance.
    GenInstance(GenInstanceArgs),
    /// Solve the full ground set with a static algorithm.
    Baseline(BaselineArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Theory,
    Practical,
}

#[derive(Args)]
struct AlgoArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    stream: PathBuf,
    #[arg(long)]
    epsilon: f64,
    /// Defaults to epsilon / 20.
    #[arg(long)]
    eps_del: Option<f64>,
    /// Defaults to the ground set size.
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::Practical)]
    mode: Mode,
    /// Trial count in practical mode.
    #[arg(long, default_value_t = DEFAULT_PRACTICAL_TRIALS)]
    t_override: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    algo: AlgoArgs,
    #[arg(long)]
    check: bool,
    #[arg(long, default_value_t = 1)]
    retrieve_every: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    format: Format,
    /// Also write the summary as JSON here; it always goes to stdout.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    algo: AlgoArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Jsonl,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    InsertOnly,
    SlidingWindow,
    RandomChurn,
}

#[derive(Args)]
struct GenStreamArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Number of ids `v0..v{n-1}`; ignored with --instance.
    #[arg(long)]
    n: Option<usize>,
    /// Take the ids from this instance file instead.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long)]
    ops: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sliding-window size; defaults to n / 4 (at least 1).
    #[arg(long)]
    window: Option<usize>,
    /// Deletion probability for random churn.
    #[arg(long, default_value_t = 0.4)]
    churn_p: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenInstanceArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    items: usize,
    #[arg(long, default_value_t = 6)]
    max_covers: usize,
    #[arg(long, default_value_t = 4.0)]
    rho: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Greedy,
    Brute,
    Static,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    algo: Algo,
    /// Threshold for the static algorithm.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    target_fraction: f64,
}

fn level_params(args: &AlgoArgs, ground_size: usize) -> dynsc::Result<LevelParams> {
    let mut p = LevelParams::new(args.epsilon, args.n_max.unwrap_or(ground_size))?;
    if let Some(eps_del) = args.eps_del {
        p = p.with_eps_del(eps_del)?;
    }
    let mode = match args.mode {
        Mode::Theory => {
            eprintln!(
                "warning: theory mode runs {} trials per sample-size estimate; expect long runtimes",
                dynsc::levels::theory_trials(p.eps, p.n_max)
            );
            SampleMode::Theory
        }
        Mode::Practical => SampleMode::Practical {
            trials: args.t_override,
        },
    };
    p.with_sample_mode(mode)
}

fn experiment(
    args: &AlgoArgs,
    check: bool,
    retrieve_every: usize,
) -> anyhow::Result<harness::Experiment> {
    let ground_size = load_instance(&args.instance)?.ground().len();
    let mut config = ExperimentConfig::new(level_params(args, ground_size)?, args.seed);
    config.check = check;
    config.retrieve_every = retrieve_every;
    Ok(harness::run_experiment_files(
        &args.instance,
        &args.stream,
        &config,
    )?)
}

fn print_json(value: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn run(args: RunArgs) -> anyhow::Result<u8> {
    let exp = experiment(&args.algo, args.check, args.retrieve_every)?;
    let format = match args.format {
        Format::Jsonl => ReportFormat::Jsonl,
        Format::Csv => ReportFormat::Csv,
    };
    harness::emit_report(&exp.records, format, &args.out)?;
    if let Some(path) = &args.summary {
        write_file(path, &serde_json::to_string_pretty(&exp.summary)?)?;
    }
    print_json(&exp.summary)?;
    Ok(if exp.summary.invariant_violations > 0 {
        EXIT_INVARIANT
    } else {
        0
    })
}

fn verify(args: VerifyArgs) -> anyhow::Result<u8> {
    let exp = experiment(&args.algo, true, 1)?;
    let s = &exp.summary;
    let passed = s.invariant_violations == 0;
    print_json(&json!({
        "passed": passed,
        "updates": s.updates,
        "invariant_checks": s.invariant_checks,
        "invariant_violations": s.invariant_violations,
        "violation_details": s.violation_details,
        "worst_coverage_ratio": s.worst_coverage_ratio,
        "instances": s.instances,
    }))?;
    Ok(if passed { 0 } else { EXIT_INVARIANT })
}

fn gen_stream(args: GenStreamArgs) -> anyhow::Result<u8> {
    let ids = match (&args.instance, args.n) {
        (Some(path), _) => load_instance(path)?
            .ground()
            .elements()
            .iter()
            .map(|e| e.name.clone())
            .collect(),
        (None, Some(n)) => harness::default_ids(n),
        (None, None) => bail!(Error::InvalidArgument(
            "one of --n or --instance is required".into()
        )),
    };
    let kind = match args.kind {
        Kind::InsertOnly => StreamKind::InsertOnly,
        Kind::SlidingWindow => StreamKind::SlidingWindow,
        Kind::RandomChurn => StreamKind::RandomChurn,
    };
    let params = StreamParams {
        ops: args.ops,
        window: args.window.unwrap_or((ids.len() / 4).max(1)),
        churn_p: args.churn_p,
    };
    let ops = harness::gen_stream(kind, &ids, params, args.seed)?;
    harness::write_stream(&ops, &args.out)?;
    Ok(0)
}

fn gen_instance(args: GenInstanceArgs) -> anyhow::Result<u8> {
    let shape = CoverageShape {
        elements: args.n,
        items: args.items,
        max_covers: args.max_covers,
        rho: args.rho,
    };
    let file = harness::random_coverage(shape, args.seed)?;
    write_file(&args.out, &serde_json::to_string_pretty(&file)?)?;
    Ok(0)
}

fn baseline(args: BaselineArgs) -> anyhow::Result<u8> {
    let obj = load_instance(&args.instance)?;
    let all: Vec<ElementId> = obj.ground().ids().collect();
    let solution = match args.algo {
        Algo::Greedy => baselines::greedy_cover(&obj, &all, args.target_fraction)?,
        Algo::Brute => baselines::brute_force_opt(&obj, &all, args.target_fraction)?.0,
        Algo::Static => {
            let tau = args.tau.ok_or_else(|| {
                Error::InvalidArgument("--tau is required for the static algorithm".into())
            })?;
            baselines::static_threshold_cover(&obj, &all, tau)?
        }
    };
    let calls = obj.calls();
    let value = if solution.is_empty() {
        0.0
    } else {
        obj.fork().evaluate(&solution)?
    };
    let names: Vec<&str> = solution.iter().map(|&e| obj.ground().name(e)).collect();
    print_json(&json!({
        "elements": names,
        "cost": obj.cost(&solution)?,
        "value": value,
        "f_V": obj.fork().evaluate(&all)?,
        "oracle_calls": calls,
    }))?;
    Ok(0)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::InvariantViolation(_) | Error::OracleContract(_)) => EXIT_INVARIANT,
        Some(Error::Io { .. } | Error::Parse { .. } | Error::UnknownElement(_)) => EXIT_IO,
        Some(_) => EXIT_USAGE,
        None if err.downcast_ref::<std::io::Error>().is_some() => EXIT_IO,
        None => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Verify(a) => verify(a),
        Command::GenStream(a) => gen_stream(a),
        Command::GenInstance(a) => gen_instance(a),
        Command::Baseline(a) => baseline(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
