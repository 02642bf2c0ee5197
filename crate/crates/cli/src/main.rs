use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use orbslicer_core::compare::{apply_filters, parse_filters, parse_pairs, render_csv, render_text, summarize, Corpus};
use orbslicer_core::criterion::{
    instrument, render_instrumented, SlicingCriterion, DEFAULT_MARKER, TOY_TRACKER_TEMPLATE,
};
use orbslicer_core::engine::{EngineConfig, Strategy, DEFAULT_MAX_PASSES, DEFAULT_MAX_WINDOW};
use orbslicer_core::exec::{load_env_config, BuiltinEnv, EnvironmentSpec};
use orbslicer_core::oracle::{ExitCodePolicy, DEFAULT_DETERMINISM_RUNS};
use orbslicer_core::pipeline::{builtin_envs_for, load_manifest, run_slice, PipelineError, SliceRequest};
use orbslicer_core::source::{DeletionMask, Program, SourceUnit};
use orbslicer_core::toy::{self, ToyStatus};

#[derive(Parser)]
#[command(name = "orbslicer", version, about = "Observation-based slicing validated in several execution environments")]
struct Cli {
    /// Environment definitions (JSON array).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Concurrent candidate evaluations; 0 uses every core.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Persist evaluation outcomes here and reuse them across runs.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Keep scratch directories of failing candidates here.
    #[arg(long, global = true)]
    keep_failures: Option<PathBuf>,
    /// Prefix of tracker output lines.
    #[arg(long, global = true, default_value = DEFAULT_MARKER)]
    marker: String,
    /// Accept candidates that exit non-zero if their tracked output matches.
    #[arg(long, global = true)]
    ignore_exit_code: bool,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Slice a program under one or more instantiations.
    Slice(SliceArgs),
    /// Compare slices produced by different instantiations.
    Compare(CompareArgs),
    /// Run a toy program under one memory model.
    ToyRun(ToyRunArgs),
    /// Inspect environments.
    Envs {
        #[command(subcommand)]
        command: EnvsCommand,
    },
}

#[derive(Subcommand)]
enum EnvsCommand {
    /// List builtin environments and those defined by --config.
    List,
}

#[derive(Args)]
struct SliceArgs {
    /// Slicing criterion as <path>:<line>:<variable>.
    #[arg(long, required_unless_present = "manifest")]
    criterion: Option<String>,
    /// Comma-separated instantiations (e.g. GC,G or toy-residue+toy-canary:1), or `all`.
    #[arg(long, required_unless_present = "manifest")]
    instantiation: Option<String>,
    /// Directory of NN.input files, one stdin payload per test.
    #[arg(long)]
    tests: Option<PathBuf>,
    /// Directory the source paths are relative to.
    #[arg(long, default_value = ".")]
    root: PathBuf,
    /// File to slice (repeatable); defaults to the criterion's file.
    #[arg(long = "source")]
    sources: Vec<String>,
    /// File the build needs but which is never sliced (repeatable).
    #[arg(long)]
    context: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_MAX_WINDOW)]
    max_window: usize,
    #[arg(long, value_enum, default_value_t = StrategyArg::Grow)]
    strategy: StrategyArg,
    #[arg(long, default_value_t = DEFAULT_MAX_PASSES)]
    max_passes: usize,
    #[arg(long, default_value_t = DEFAULT_DETERMINISM_RUNS)]
    determinism_runs: usize,
    /// Replay the run recorded in this manifest.
    #[arg(long, conflicts_with_all = ["criterion", "instantiation", "tests", "sources", "context"])]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Grow,
    Largest,
}

#[derive(Args)]
struct CompareArgs {
    /// Directory searched recursively for slice.json files.
    #[arg(long)]
    slices: PathBuf,
    /// Comma-separated A:B pairs; defaults to every pair of instantiations found.
    #[arg(long)]
    pairs: Option<String>,
    /// Comma-separated filters: nondet, criterion.
    #[arg(long, default_value = "")]
    filters: String,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Args)]
struct ToyRunArgs {
    file: PathBuf,
    /// toy-zero, toy-residue, toy-canary:<seed>, toy-canary:random or toy-typed.
    #[arg(long, default_value = "toy-zero")]
    model: String,
    /// File fed to input() and getchar(); `-` reads standard input.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Print <var> after line <line>, as the slicer's tracker would.
    #[arg(long, value_name = "LINE:VAR")]
    track: Option<String>,
}

/// Failures that carry their own exit code.
#[derive(Debug)]
struct Exit(u8);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "exit {}", self.0)
    }
}

impl std::error::Error for Exit {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();

    match run(&cli) {
        Ok(code) => code,
        Err(e) => match e.downcast_ref::<Exit>() {
            Some(Exit(code)) => ExitCode::from(*code),
            None => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Slice(args) => cmd_slice(cli, args),
        Command::Compare(args) => cmd_compare(args),
        Command::ToyRun(args) => cmd_toy_run(args),
        Command::Envs { command: EnvsCommand::List } => cmd_envs_list(cli),
    }
}

fn engine_config(cli: &Cli, args: &SliceArgs) -> EngineConfig {
    EngineConfig {
        max_window: args.max_window,
        strategy: match args.strategy {
            StrategyArg::Grow => Strategy::GrowFirstSuccess,
            StrategyArg::Largest => Strategy::LargestOfConcurrent,
        },
        max_passes: args.max_passes,
        exit_code_policy: if cli.ignore_exit_code { ExitCodePolicy::Ignore } else { ExitCodePolicy::Strict },
        jobs: cli.jobs,
        determinism_runs: args.determinism_runs,
        marker: cli.marker.clone(),
    }
}

fn cmd_slice(cli: &Cli, args: &SliceArgs) -> Result<ExitCode> {
    let req = match &args.manifest {
        Some(path) => {
            let manifest = load_manifest(path)?;
            let mut req = SliceRequest::from_manifest(&manifest, args.out.clone())?;
            req.keep_failures = cli.keep_failures.clone();
            req.engine.jobs = cli.jobs;
            if cli.cache_dir.is_some() {
                req.cache_dir = cli.cache_dir.clone();
            }
            req
        }
        None => {
            let criterion: SlicingCriterion = args.criterion.as_deref().expect("clap enforces --criterion").parse()?;
            let instantiations = args.instantiation.clone().expect("clap enforces --instantiation");
            let environments = match &cli.config {
                Some(path) => load_env_config(path)?,
                None => builtin_envs_for(&instantiations)?,
            };
            SliceRequest {
                root: args.root.clone(),
                sources: args.sources.clone(),
                context: args.context.clone(),
                criterion,
                config_path: cli.config.clone(),
                environments,
                instantiations,
                tests_dir: args.tests.clone(),
                engine: engine_config(cli, args),
                cache_dir: cli.cache_dir.clone(),
                keep_failures: cli.keep_failures.clone(),
                out: args.out.clone(),
            }
        }
    };
    match run_slice(&req) {
        Ok(report) => {
            for (record, dir) in report.records.iter().zip(&report.out_dirs) {
                let total = record.retained_count() + record.deleted.values().map(Vec::len).sum::<usize>();
                println!(
                    "{}: kept {}/{} lines, {} passes{} -> {}",
                    record.instantiation_id,
                    record.retained_count(),
                    total,
                    record.stats.passes,
                    if record.stats.fixpoint { "" } else { " (pass cap reached)" },
                    dir.display()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            if matches!(e, PipelineError::Usage(_)) {
                eprintln!("see `orbslicer slice --help`");
            }
            Err(Exit(code as u8).into())
        }
    }
}

fn cmd_compare(args: &CompareArgs) -> Result<ExitCode> {
    let corpus = Corpus::load(&args.slices)?;
    let filters = parse_filters(&args.filters)?;
    let (kept, removals) = apply_filters(&corpus, &filters)?;
    let pairs = match &args.pairs {
        Some(p) => parse_pairs(p, &corpus.by_inst.keys().cloned().collect())?,
        None => {
            let ids: Vec<&String> = corpus.by_inst.keys().collect();
            let mut pairs = Vec::new();
            for (i, a) in ids.iter().enumerate() {
                for b in &ids[i + 1..] {
                    pairs.push(((*a).clone(), (*b).clone()));
                }
            }
            pairs
        }
    };
    if pairs.is_empty() {
        bail!("need slices from at least two instantiations to compare");
    }
    let rows = summarize(&kept, &pairs)?;
    let report = match args.format {
        Format::Text => render_text(&rows, &removals, &filters),
        Format::Csv => {
            for r in &removals {
                let why: Vec<String> = r.reasons.iter().map(ToString::to_string).collect();
                eprintln!("removed {} ({})", r.identity, why.join("+"));
            }
            render_csv(&rows)
        }
    };
    match &args.out {
        Some(path) => std::fs::write(path, report).with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{report}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn read_input(path: Option<&Path>) -> Result<String> {
    match path {
        None => Ok(String::new()),
        Some(p) if p == Path::new("-") => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display())),
    }
}

fn cmd_toy_run(args: &ToyRunArgs) -> Result<ExitCode> {
    let env: BuiltinEnv = args.model.parse()?;
    let mut text =
        std::fs::read_to_string(&args.file).with_context(|| format!("cannot read {}", args.file.display()))?;
    if let Some(track) = &args.track {
        let name = args.file.display().to_string();
        let criterion: SlicingCriterion = format!("{name}:{track}").parse()?;
        let program = Program::single(SourceUnit::from_text(&name, &text));
        let tracker = instrument(&program, &criterion, TOY_TRACKER_TEMPLATE, DEFAULT_MARKER)?;
        text = render_instrumented(&program, &DeletionMask::new(), &tracker)?.remove(0).text;
    }
    let input = read_input(args.input.as_deref())?;
    let model = env.model();
    if matches!(env, BuiltinEnv::Canary(orbslicer_core::exec::CanarySeed::PerRun)) {
        eprintln!("canary seed: {model}");
    }
    let run = match toy::run_source(&text, model, env.is_typed(), &input) {
        Ok(run) => run,
        Err(e) => {
            eprintln!("{}: {e}", args.file.display());
            return Err(Exit(2).into());
        }
    };
    print!("{}", run.stdout);
    Ok(match run.status {
        ToyStatus::Exited(code) => ExitCode::from(code as u8),
        ToyStatus::Crashed { reason, exit_code } => {
            eprintln!("crashed: {reason}");
            ExitCode::from(exit_code as u8)
        }
        ToyStatus::StepLimit => {
            eprintln!("step limit exceeded");
            ExitCode::from(124)
        }
    })
}

fn cmd_envs_list(cli: &Cli) -> Result<ExitCode> {
    println!("builtin:");
    for name in BuiltinEnv::NAMES {
        println!("  {name}");
    }
    if let Some(path) = &cli.config {
        let envs: Vec<EnvironmentSpec> = load_env_config(path)?;
        println!("configured ({}):", path.display());
        for e in envs {
            println!("  {:<12} {}  timeout {} ms", e.id, e.describe(), e.timeout_ms);
        }
    }
    Ok(ExitCode::SUCCESS)
}
