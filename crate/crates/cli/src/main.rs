mod input;

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use pcrm::analysis::{estimate_regularity_on, verify_two_set_bound, BoundCheck};
use pcrm::bench::{aggregate, aggregate_to_csv, csv_writer, run_bench};
use pcrm::solver::solve_with_pool;
use pcrm::{
    angle_report, from_descriptor, AngleReport, BenchConfig, BenchRecord, Error,
    GenerationDescriptor, Method, SolverConfig, Status, StopRule, WorkerPool,
};
use serde::Serialize;

/// Circumcentered-reflection and simultaneous-projection solvers for
/// block-partitioned linear systems.
#[derive(Parser)]
#[command(name = "pcrm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generation descriptor and print its block count.
    Gen(GenArgs),
    /// Solve one instance and print its CSV record.
    Solve(SolveArgs),
    /// Sweep a grid of generated instances and write CSV records.
    Bench(BenchArgs),
    /// Friedrichs angle or sampled regularity constant of an instance.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    coherence: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[group(id = "source", required = true, multiple = false, args = ["inst", "blocks"])]
struct Source {
    /// Generation descriptor written by `gen`.
    #[arg(long)]
    inst: Option<PathBuf>,
    /// JSON file with explicit blocks: {"blocks": [{"a": [[..]], "b": [..]}], "solution"?, "start"?}.
    #[arg(long)]
    blocks: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value = "pcrm")]
    method: Method,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// `uniform`, `cimmino`, or an explicit list `p0,p1,...,pm` (F-SPM only).
    #[arg(long)]
    weights: Option<String>,
    #[arg(long, default_value_t = pcrm::solver::DEFAULT_TOLERANCE)]
    tol: f64,
    #[arg(long, default_value_t = pcrm::solver::DEFAULT_MAX_ITERATIONS)]
    max_iter: usize,
    /// `auto` uses the relative error when a reference solution is known and
    /// the feasibility residual otherwise.
    #[arg(long, default_value = "auto")]
    stop_rule: String,
    /// Append the record to this CSV file (the header is written if it is new).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON grid configuration; omitted fields take the reference defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-run CSV destination; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print per-(method, blocks, m, n, workers) means over coherence and seeds to stdout.
    #[arg(long)]
    aggregate: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Angle,
    Regularity,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_enum, default_value = "angle")]
    mode: Mode,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// In angle mode, also check the two-set error bound on `--samples` points.
    #[arg(long)]
    verify: bool,
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 2,
            error: error.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(Error::NumericalBreakdown { .. }) => 4,
            Some(
                Error::Io(_)
                | Error::Csv(_)
                | Error::Factorization(_)
                | Error::DegenerateSystem { .. },
            ) => 1,
            Some(_) => 2,
            None if error.downcast_ref::<io::Error>().is_some() => 1,
            None => 2,
        };
        Self { code, error }
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        anyhow::Error::from(error).into()
    }
}

type CmdResult = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Analyze(args) => cmd_analyze(args),
    };
    match result {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}

fn cmd_gen(args: GenArgs) -> CmdResult {
    let descriptor = GenerationDescriptor::new(args.m, args.n, args.coherence, args.seed)?;
    let instance = from_descriptor(&descriptor)?;
    fs::write(&args.out, descriptor.to_json()? + "\n")
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!("{}", descriptor.block_count);
    eprintln!("sha256={}", instance.content_hash());
    Ok(ExitCode::SUCCESS)
}

fn parse_stop_rule(text: &str, has_reference: bool) -> Result<StopRule, Failure> {
    if text == "auto" {
        return Ok(if has_reference {
            StopRule::RelErrToKnown
        } else {
            StopRule::FeasibilityResidual
        });
    }
    text.parse().map_err(Failure::usage)
}

fn apply_weights(
    config: SolverConfig,
    weights: Option<&str>,
    blocks: usize,
) -> Result<SolverConfig, Failure> {
    let Some(spec) = weights else {
        return Ok(config);
    };
    if !matches!(config.method, Method::Fspm | Method::Cimmino) {
        return Err(Failure::usage(anyhow::anyhow!(
            "--weights applies to fspm and cimmino only"
        )));
    }
    let values = match spec {
        "uniform" => pcrm::Weights::uniform(blocks).as_slice().to_vec(),
        "cimmino" => pcrm::Weights::cimmino(blocks).as_slice().to_vec(),
        list => list
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Failure::usage(anyhow::anyhow!("bad --weights {list:?}: {e}")))?,
    };
    Ok(config.weights(values))
}

fn cmd_solve(args: SolveArgs) -> CmdResult {
    let loaded = input::load(args.source.inst.as_deref(), args.source.blocks.as_deref())
        .map_err(Failure::usage)?;
    let instance = &loaded.instance;
    let stop_rule = parse_stop_rule(&args.stop_rule, instance.known_solution().is_some())?;
    let config = SolverConfig::new(args.method)
        .tolerance(args.tol)
        .max_iterations(args.max_iter)
        .stop_rule(stop_rule)
        .workers(args.workers);
    let config = apply_weights(config, args.weights.as_deref(), instance.block_count())?;
    config.validate()?;
    let pool = WorkerPool::new(args.workers)?;
    eprintln!("sha256={}", instance.content_hash());

    let outcome = match solve_with_pool(instance, &config, &loaded.start, &pool) {
        Err(Error::NumericalBreakdown { trace }) => {
            eprintln!(
                "error: numerical breakdown after {} iterations",
                trace.iterations()
            );
            return Ok(ExitCode::from(4));
        }
        other => other?,
    };
    let record = BenchRecord::from_outcome(instance, args.method, args.workers, &outcome);
    let stdout = io::stdout().lock();
    let mut writer = csv_writer(stdout, true);
    writer.serialize(&record).map_err(Error::from)?;
    writer.flush().map_err(Error::from)?;
    if let Some(path) = &args.csv {
        append_record(path, &record)?;
    }

    match outcome.trace.status {
        Status::Converged => Ok(ExitCode::SUCCESS),
        Status::MaxIter => {
            eprintln!(
                "not converged after {} iterations",
                outcome.trace.iterations()
            );
            Ok(ExitCode::from(3))
        }
        Status::DivergedNumerically => Ok(ExitCode::from(4)),
    }
}

fn append_record(path: &Path, record: &BenchRecord) -> Result<(), Failure> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(|e| Failure { code: 1, error: e })?;
    let mut writer = csv_writer(file, fresh);
    writer.serialize(record).map_err(Error::from)?;
    writer.flush().map_err(Error::from)?;
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> CmdResult {
    let config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(|e| Failure { code: 1, error: e })?;
            BenchConfig::from_json(&text).map_err(Failure::usage)?
        }
        None => BenchConfig::default(),
    };
    let out = args
        .out
        .clone()
        .or(config.output.clone().map(PathBuf::from));

    // Rows are flushed one by one so an interrupted sweep keeps what it finished.
    let sink: Box<dyn Write> = match &out {
        Some(path) => Box::new(
            File::create(path)
                .with_context(|| format!("creating {}", path.display()))
                .map_err(|e| Failure { code: 1, error: e })?,
        ),
        None if args.aggregate => Box::new(io::sink()),
        None => Box::new(io::stdout()),
    };
    let mut writer = csv_writer(sink, true);
    let summary = run_bench(&config, |record| {
        writer.serialize(record)?;
        writer.flush()?;
        eprintln!(
            "{} m={} n={} c={} seed={} workers={}: {} iterations, {:.6}s",
            record.method,
            record.m,
            record.n,
            record.coherence.unwrap_or(f64::NAN),
            record.seed.unwrap_or(0),
            record.workers,
            record.iterations,
            record.wall_time_s
        );
        Ok(())
    })?;

    if args.aggregate {
        print!("{}", aggregate_to_csv(&aggregate(&summary.records))?);
    }
    if summary.failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for failure in &summary.failures {
            eprintln!("failed: {failure}");
        }
        Ok(ExitCode::from(5))
    }
}

#[derive(Serialize)]
struct AngleOutput {
    #[serde(flatten)]
    report: AngleReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    verification: Option<BoundCheck>,
}

#[derive(Serialize)]
struct RegularityOutput {
    regularity: f64,
    samples: usize,
    seed: u64,
    blocks: usize,
}

fn cmd_analyze(args: AnalyzeArgs) -> CmdResult {
    let loaded = input::load(args.source.inst.as_deref(), args.source.blocks.as_deref())
        .map_err(Failure::usage)?;
    let blocks = loaded.instance.subspaces();
    let json = match args.mode {
        Mode::Angle => {
            let (u, v) = match blocks {
                [u] => (u, u),
                [u, v] => (u, v),
                _ => {
                    return Err(Failure::usage(anyhow::anyhow!(
                        "angle mode needs at most 2 blocks, instance has {}",
                        blocks.len()
                    )))
                }
            };
            let verification = if args.verify {
                Some(verify_two_set_bound(u, v, args.samples, args.seed, 1e-9)?)
            } else {
                None
            };
            let failed = verification.as_ref().is_some_and(|c| !c.passed);
            let output = AngleOutput {
                report: angle_report(u, v)?,
                verification,
            };
            println!(
                "{}",
                serde_json::to_string_pretty(&output).map_err(Error::from)?
            );
            if failed {
                eprintln!("error bound violated on sampled points");
                return Ok(ExitCode::from(1));
            }
            return Ok(ExitCode::SUCCESS);
        }
        Mode::Regularity => {
            let pool = WorkerPool::new(args.workers)?;
            let regularity =
                estimate_regularity_on(&pool, &loaded.instance, args.samples, args.seed)?;
            serde_json::to_string_pretty(&RegularityOutput {
                regularity,
                samples: args.samples,
                seed: args.seed,
                blocks: blocks.len(),
            })
            .map_err(Error::from)?
        }
    };
    println!("{json}");
    Ok(ExitCode::SUCCESS)
}
