use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use apf_core::adaptation::{ProposalKind, Target, WeightStrategy};
use apf_core::analysis::{compare_strategies, write_variance_csv, VarianceOptions};
use apf_core::error::Error;
use apf_core::experiment::{
    catalog_entry, describe, load_observations, run_experiment, simulate_record, write_outputs, ExperimentConfig,
    EXPERIMENT_IDS,
};
use apf_core::filters::FilterVariant;
use apf_core::models::{write_record, GridSpec};
use clap::{Args, Parser, Subcommand};

/// Replicated MSE experiments for auxiliary particle filters.
#[derive(Parser)]
#[command(name = "apf-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write mse.csv, plot.csv and degenerate.csv.
    Run(RunArgs),
    /// Evaluate the asymptotic-variance recursions for the experiment's arms.
    Variance(VarianceArgs),
    /// List the built-in experiments.
    List,
    /// Simulate an observation record from an experiment's model.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct Selection {
    /// Built-in experiment id (see `list`).
    #[arg(long)]
    experiment: Option<String>,
    /// `key = value` configuration file; command-line options override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    selection: Selection,
    /// Particles N.
    #[arg(long)]
    particles: Option<usize>,
    /// First-stage draws M_N of the two-stage filter (a multiple of N).
    #[arg(long)]
    mn: Option<usize>,
    /// Pilot size: a count, or `N/d`.
    #[arg(long)]
    pilot: Option<String>,
    /// Replications per arm.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: results/<id>].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VarianceArgs {
    #[command(flatten)]
    selection: Selection,
    /// Grid nodes used by the evaluator.
    #[arg(long, default_value_t = 1024)]
    nodes: usize,
    /// Write variance.csv here instead of printing it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    experiment: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Observations to simulate.
    #[arg(long, default_value_t = 11)]
    len: usize,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Config(Error),
    Runtime(Error),
    Degenerate(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::InvalidModel(_) | Error::Parse(_) | Error::Unsupported(_) => {
                Failure::Config(e)
            }
            e => Failure::Runtime(e),
        }
    }
}

fn load_config(sel: &Selection) -> Result<ExperimentConfig, Failure> {
    let config = match (&sel.config, &sel.experiment) {
        (Some(path), id) => {
            let mut text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(Error::InvalidConfig(format!("{}: {e}", path.display()))))?;
            // `--experiment` stands in for an `experiment` line the file lacks.
            if let Some(id) = id {
                if !text
                    .lines()
                    .any(|l| l.split('#').next().unwrap_or("").trim_start().starts_with("experiment"))
                {
                    text = format!("experiment = {id}\n{text}");
                }
            }
            ExperimentConfig::parse(&text)?
        }
        (None, Some(id)) => catalog_entry(id)?,
        (None, None) => return Err(Error::InvalidConfig("one of --experiment or --config is required".into()).into()),
    };
    Ok(config)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut config = load_config(&args.selection)?;
    let mut set = |k: &str, v: Option<String>| v.map_or(Ok(()), |v| config.set(k, &v));
    set("particles", args.particles.map(|v| v.to_string()))?;
    set("mn", args.mn.map(|v| v.to_string()))?;
    set("pilot", args.pilot)?;
    set("runs", args.runs.map(|v| v.to_string()))?;
    set("seed", args.seed.map(|v| v.to_string()))?;
    if let Some(out) = args.out {
        config.out = Some(out);
    }
    config.validate()?;
    let dir = config
        .out
        .clone()
        .unwrap_or_else(|| Path::new("results").join(&config.id));
    let report = run_experiment(&config)?;
    for path in write_outputs(&report, &dir)? {
        println!("{}", path.display());
    }
    let lost: Vec<String> = report
        .arms
        .iter()
        .filter(|a| a.completed() == 0)
        .map(|a| a.label())
        .collect();
    if !lost.is_empty() {
        return Err(Failure::Degenerate(lost.join(", ")));
    }
    Ok(())
}

fn variance(args: VarianceArgs) -> Result<(), Failure> {
    let config = load_config(&args.selection)?;
    let model = config.model.build()?;
    let ys = load_observations(&config)?;
    let mut arms: Vec<(WeightStrategy, ProposalKind)> = Vec::new();
    for arm in &config.arms {
        let pair = match arm.variant {
            FilterVariant::Bootstrap => (WeightStrategy::Uniform, ProposalKind::Prior),
            _ => (arm.strategy, arm.proposal),
        };
        if !arms.contains(&pair) {
            arms.push(pair);
        }
    }
    let defaults = VarianceOptions::for_model(model.as_ref());
    let options = VarianceOptions {
        grid: GridSpec {
            nodes: args.nodes,
            ..defaults.grid
        },
        beta: 1.0 / config.first_stage_factor()? as f64,
        ..defaults
    };
    let table = compare_strategies(model.as_ref(), &ys, &arms, &Target::Projection, &options)?;
    for v in &table.violations {
        eprintln!(
            "warning: step {}: optimal weights give {} > {} ({})",
            v.k, v.optimal, v.other, v.strategy
        );
    }
    match args.out {
        Some(dir) => {
            fs::create_dir_all(&dir).map_err(Error::from)?;
            let path = dir.join("variance.csv");
            let mut buf = Vec::new();
            write_variance_csv(&table.rows, &mut buf)?;
            fs::write(&path, buf).map_err(Error::from)?;
            println!("{}", path.display());
        }
        None => write_variance_csv(&table.rows, std::io::stdout().lock())?,
    }
    Ok(())
}

fn list() -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    for id in EXPERIMENT_IDS {
        writeln!(out, "{id:<28}{}", describe(id).unwrap_or("")).map_err(Error::from)?;
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let config = catalog_entry(&args.experiment)?;
    let traj = simulate_record(&config.model, args.seed, args.len)?;
    write_record(&args.out, &traj.observations)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Variance(a) => variance(a),
        Command::List => list(),
        Command::Simulate(a) => simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Degenerate(arms)) => {
            eprintln!("every replication degenerated for: {arms}");
            ExitCode::from(3)
        }
    }
}
