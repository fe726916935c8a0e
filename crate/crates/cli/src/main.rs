use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use episim::config::MeanFieldConfig;
use episim::engine::{audit_trace, write_trace, RunOptions};
use episim::meanfield::{Fidelity, Method};
use episim::trend::{aggregate_runs, emit_trends, read_trends, render, Format, TrendDocument};
use episim::{parse_scenario, run_meanfield, run_seeds, MeanFieldPlan, ScenarioError};

/// Compartmental epidemic simulator: mean-field ODEs and agent-based runs.
#[derive(Parser)]
#[command(name = "episim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct OutputArgs {
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json; inferred from --out when omitted.
    #[arg(long)]
    format: Option<Format>,
}

impl OutputArgs {
    fn format(&self) -> Format {
        self.format
            .or_else(|| self.out.as_deref().map(Format::from_path))
            .unwrap_or(Format::Csv)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the mean-field equations.
    Meanfield {
        config: PathBuf,
        /// as-written or diagram.
        #[arg(long)]
        fidelity: Option<Fidelity>,
        /// euler or rk4.
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        dt: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the agent-based engine over one or more seeds.
    Simulate {
        config: PathBuf,
        /// Number of seeds, starting at the configured seed.
        #[arg(long)]
        seeds: Option<usize>,
        /// First seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Event trace (JSON lines); one file per seed when sweeping.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Contact-phase threads per run.
        #[arg(long)]
        threads: Option<usize>,
        /// Seeds run concurrently; defaults to the available cores.
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Parse and validate a scenario, loading its data.
    Validate { config: PathBuf },
    /// Mean and standard deviation of trend files from one scenario.
    Aggregate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn write_doc(doc: &TrendDocument, output: &OutputArgs) -> Result<(), Failure> {
    let format = output.format();
    match &output.out {
        Some(path) => emit_trends(doc, format, path).map_err(runtime),
        None => {
            print!("{}", render(doc, format).map_err(runtime)?);
            Ok(())
        }
    }
}

/// `runs/out.csv` with seed 7 becomes `runs/out.seed7.csv`.
fn per_seed(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}.seed{seed}.{ext}"),
        None => format!("{stem}.seed{seed}"),
    };
    path.with_file_name(name)
}

fn meanfield(
    config: &Path,
    fidelity: Option<Fidelity>,
    method: Option<Method>,
    dt: Option<f64>,
    output: &OutputArgs,
) -> Result<(), Failure> {
    let exp = parse_scenario(config)?;
    let cfg = &exp.config;
    let settings = MeanFieldConfig {
        fidelity: fidelity.unwrap_or(cfg.meanfield.fidelity),
        method: method.unwrap_or(cfg.meanfield.method),
        dt: dt.unwrap_or(cfg.meanfield.dt),
        ..cfg.meanfield.clone()
    };
    settings.steps_per_iteration().map_err(Failure::Validation)?;
    let plan = MeanFieldPlan {
        toggles: cfg.model,
        params: cfg.base_params(),
        schedule: cfg.schedule.clone(),
        iterations: cfg.run.iterations,
        initial_infected: cfg.run.initial_infected,
        hash: exp.hash.clone(),
    };
    let out = run_meanfield(&plan, &settings).map_err(runtime)?;
    if !out.clamps.is_empty() {
        eprintln!("{} negative values clamped to zero", out.clamps.len());
    }
    write_doc(&out.series.into(), output)
}

struct SimulateArgs<'a> {
    config: &'a Path,
    seeds: Option<usize>,
    seed: Option<u64>,
    trace: Option<&'a Path>,
    threads: Option<usize>,
    jobs: Option<usize>,
    output: &'a OutputArgs,
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let exp = parse_scenario(args.config)?;
    let scenario = exp.agent_scenario()?;
    let mut run = exp.config.run.clone();
    run.seeds = args.seeds.unwrap_or(run.seeds);
    run.seed = args.seed.unwrap_or(run.seed);
    if run.seeds == 0 {
        return Err(Failure::Validation("--seeds must be at least 1".into()));
    }
    let options = RunOptions {
        threads: args.threads.unwrap_or(run.threads).max(1),
        trace: args.trace.is_some(),
    };
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from));
    let seeds = run.seed_list();
    let outputs = run_seeds(scenario, &seeds, &options, jobs).map_err(runtime)?;

    if let Some(trace_path) = args.trace {
        for out in &outputs {
            let seed = out.series.meta.seed.unwrap_or_default();
            let path = if outputs.len() == 1 {
                trace_path.to_path_buf()
            } else {
                per_seed(trace_path, seed)
            };
            write_trace(&path, &out.trace).map_err(runtime)?;
            let report = audit_trace(&out.trace, scenario);
            eprintln!(
                "seed {seed}: {} events, {} invariant violations",
                out.trace.len(),
                report.violations()
            );
            for msg in &report.messages {
                eprintln!("  {msg}");
            }
        }
    }

    if outputs.len() == 1 {
        return write_doc(&outputs[0].series.clone().into(), args.output);
    }
    if let Some(path) = &args.output.out {
        for out in &outputs {
            let seed = out.series.meta.seed.unwrap_or_default();
            emit_trends(&out.series.clone().into(), args.output.format(), &per_seed(path, seed))
                .map_err(runtime)?;
        }
    }
    let bundle = aggregate_runs(outputs.into_iter().map(|o| o.series).collect()).map_err(runtime)?;
    write_doc(&bundle.into(), args.output)
}

fn validate(config: &Path) -> Result<(), Failure> {
    let exp = parse_scenario(config)?;
    match &exp.scenario {
        Some(s) => println!(
            "ok: scenario {} with {} agents, {} iterations, compartments {}",
            exp.hash,
            s.agent_count(),
            s.iterations,
            s.active_compartments()
                .iter()
                .map(|c| c.label())
                .collect::<Vec<_>>()
                .join(",")
        ),
        None => println!("ok: scenario {} (mean-field only, no contact source)", exp.hash),
    }
    Ok(())
}

fn aggregate(files: &[PathBuf], output: &OutputArgs) -> Result<(), Failure> {
    let mut series = Vec::with_capacity(files.len());
    for path in files {
        match read_trends(path).map_err(|e| Failure::Validation(e.to_string()))? {
            TrendDocument::Series(s) => series.push(s),
            TrendDocument::Aggregate(_) => {
                return Err(Failure::Validation(format!(
                    "{}: already an aggregate",
                    path.display()
                )))
            }
        }
    }
    let bundle = aggregate_runs(series).map_err(|e| Failure::Validation(e.to_string()))?;
    write_doc(&bundle.into(), output)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Meanfield {
            config,
            fidelity,
            method,
            dt,
            output,
        } => meanfield(config, *fidelity, *method, *dt, output),
        Command::Simulate {
            config,
            seeds,
            seed,
            trace,
            threads,
            jobs,
            output,
        } => simulate(SimulateArgs {
            config,
            seeds: *seeds,
            seed: *seed,
            trace: trace.as_deref(),
            threads: *threads,
            jobs: *jobs,
            output,
        }),
        Command::Validate { config } => validate(config),
        Command::Aggregate { files, output } => aggregate(files, output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
