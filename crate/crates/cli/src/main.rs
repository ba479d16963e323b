//! `currency-sim`: graph generation, single runs, parameter sweeps and tail
//! bounds for the currency competition model.
//!
//! Exit codes: 0 on success, 1 on runtime or I/O failure, 2 on usage errors.

mod grid;

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use currency_core::experiments::{initial_state, replication_seed, run_on_graph};
use currency_core::{
    sweep, union_bound, BoundParams, CurrencyState, ExperimentConfig, Graph, SweepParam, Topology,
    TrialsConvention, Weighting,
};

use grid::{NGrid, ValueGrid};

#[derive(Parser, Debug)]
#[command(
    name = "currency-sim",
    version,
    about = "Currency competition on random graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a graph and write it as an edge list
    Generate(GenerateArgs),
    /// Run one trajectory to equilibrium and report it
    Run(RunArgs),
    /// Sweep the link density of a one-community graph
    SweepOne(SweepOneArgs),
    /// Sweep the cross-community probability of a two-community graph
    SweepTwo(SweepTwoArgs),
    /// Tabulate the flip probability and its tail bounds over N
    Bounds(BoundsArgs),
}

#[derive(Args, Debug)]
struct TopologyArgs {
    /// Link probability of a one-community graph
    #[arg(long, conflicts_with_all = ["p_intra", "p_inter"])]
    p: Option<f64>,
    /// Within-community link probability
    #[arg(long)]
    p_intra: Option<f64>,
    /// Cross-community link probability
    #[arg(long)]
    p_inter: Option<f64>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[command(flatten)]
    topology: TopologyArgs,
    /// Master seed; defaults to $SIM_SEED, then 0
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (standard output if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Settings shared by `run` and the sweeps. Flags override `--config`.
#[derive(Args, Debug)]
struct ConfigArgs {
    /// Flat key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// random | fixed | synchronous
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long, value_parser = ["unit", "degree", "poisson"])]
    weighting: Option<String>,
    /// Mean of Poisson weights (default: expected degree)
    #[arg(long)]
    poisson_mean: Option<f64>,
    /// Master seed; defaults to $SIM_SEED, then 0
    #[arg(long)]
    seed: Option<u64>,
    /// Elementary-update budget per run (default 100 n^2)
    #[arg(long)]
    max_steps: Option<u64>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    topology: TopologyArgs,
    /// distinct | unified
    #[arg(long)]
    initial: Option<String>,
    /// Run on this edge-list file instead of sampling a graph
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Start from this state snapshot
    #[arg(long)]
    state: Option<PathBuf>,
    /// Write the utility trace as `step,utility` CSV
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated grid, e.g. 0,0.05,0.1
    #[arg(long, conflicts_with = "range", required_unless_present = "range")]
    values: Option<ValueGrid>,
    /// Inclusive grid lo:hi:step
    #[arg(long)]
    range: Option<ValueGrid>,
    #[arg(long)]
    replications: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// Output CSV (standard output if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepOneArgs {
    #[command(flatten)]
    sweep: SweepArgs,
}

#[derive(Args, Debug)]
struct SweepTwoArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    #[arg(long)]
    p_intra: Option<f64>,
    /// distinct | unified
    #[arg(long)]
    initial: Option<String>,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long)]
    p_intra: f64,
    #[arg(long)]
    p_inter: f64,
    /// N grid, lo:hi:step or a comma-separated list
    #[arg(long, default_value = "10:1000:10")]
    n: NGrid,
    /// Neighbour trials per agent: full (N each) or halves
    #[arg(long, default_value = "full")]
    convention: TrialsConvention,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

// Errors from the library are about the inputs it was handed.
impl From<currency_core::Error> for Failure {
    fn from(e: currency_core::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn parse_file<T>(path: &Path) -> CliResult<T>
where
    T: std::str::FromStr<Err = currency_core::Error>,
{
    read(path)?
        .parse()
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
        }
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Runtime(format!("stdout: {e}"))),
    }
}

fn default_seed() -> CliResult<u64> {
    match std::env::var("SIM_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|e| Failure::Usage(format!("SIM_SEED: {e}"))),
        Err(_) => Ok(0),
    }
}

/// Defaults, then `$SIM_SEED`, then the config file, then flags in order.
fn build_config(
    args: &ConfigArgs,
    flags: Vec<(&str, Option<String>)>,
) -> CliResult<ExperimentConfig> {
    let mut config = ExperimentConfig {
        master_seed: default_seed()?,
        ..Default::default()
    };
    if let Some(path) = &args.config {
        config
            .apply_kv(&read(path)?)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    }
    let shared = [
        ("n", args.n.map(|v| v.to_string())),
        ("schedule", args.schedule.clone()),
        ("weighting", args.weighting.clone()),
        ("poisson_mean", args.poisson_mean.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("max_steps", args.max_steps.map(|v| v.to_string())),
    ];
    for (key, value) in shared.into_iter().chain(flags) {
        if let Some(value) = value {
            config.set(key, &value)?;
        }
    }
    Ok(config)
}

fn topology_flags(t: &TopologyArgs) -> Vec<(&'static str, Option<String>)> {
    vec![
        ("p", t.p.map(|v| v.to_string())),
        ("p_intra", t.p_intra.map(|v| v.to_string())),
        ("p_inter", t.p_inter.map(|v| v.to_string())),
    ]
}

fn cmd_generate(args: GenerateArgs) -> CliResult<()> {
    let t = &args.topology;
    let topology = match (t.p, t.p_intra, t.p_inter) {
        (Some(p), None, None) => Topology::OneCommunity { p },
        (None, Some(p_intra), Some(p_inter)) => Topology::TwoCommunity { p_intra, p_inter },
        _ => {
            return Err(Failure::Usage(
                "give either --p, or both --p-intra and --p-inter".into(),
            ))
        }
    };
    let config = ExperimentConfig {
        n: args.n,
        topology,
        master_seed: args.seed.map_or_else(default_seed, Ok)?,
        ..Default::default()
    };
    config.validate()?;
    // the graph replication 0 of `run` sees under the same seed
    let graph = topology.generate(args.n, replication_seed(config.master_seed, 0))?;
    emit(args.out.as_deref(), &graph.to_string())
}

fn cmd_run(args: RunArgs) -> CliResult<()> {
    let mut flags = topology_flags(&args.topology);
    flags.push(("initial", args.initial.clone()));
    let mut config = build_config(&args.config, flags)?;

    let seed = replication_seed(config.master_seed, 0);
    let graph = match &args.graph {
        Some(path) => {
            let g: Graph = parse_file(path)?;
            config.n = g.n();
            if let Weighting::Poisson { mean: None } = config.weighting {
                let mean = 2.0 * g.edge_count() as f64 / g.n() as f64;
                config.weighting = Weighting::Poisson { mean: Some(mean) };
            }
            // the file fixes n and the communities; the sampled topology does not apply
            g
        }
        None => {
            config.validate()?;
            config.topology.generate(config.n, seed)?
        }
    };
    let initial = match &args.state {
        Some(path) => parse_file::<CurrencyState>(path)?,
        None => initial_state(&config, &graph, seed)?,
    };
    let out = run_on_graph(&config, graph, initial, 0)?;
    let r = &out.record;

    let mut report = String::new();
    let _ = writeln!(report, "n: {}", out.graph.n());
    let _ = writeln!(report, "edges: {}", r.edge_count);
    let _ = writeln!(report, "steps: {}", r.steps);
    let _ = writeln!(report, "switches: {}", r.switches);
    let _ = writeln!(report, "currencies: {}", r.currency_count);
    let _ = writeln!(report, "components: {}", r.component_count);
    let _ = writeln!(report, "utility: {}", r.final_utility);
    let _ = writeln!(report, "converged: {}", r.converged);
    let _ = writeln!(report, "cycle_detected: {}", r.cycle_detected);
    emit(None, &report)?;

    if let Some(path) = &args.trace {
        let mut csv = String::from("step,utility\n");
        for (step, u) in out.result.trace_steps.iter().zip(&out.result.utility_trace) {
            let _ = writeln!(csv, "{step},{u}");
        }
        emit(Some(path), &csv)?;
    }
    Ok(())
}

fn run_sweep(args: &SweepArgs, param: SweepParam, mut config: ExperimentConfig) -> CliResult<()> {
    if let Some(r) = args.replications {
        config.set("replications", &r.to_string())?;
    }
    let values = args
        .values
        .as_ref()
        .or(args.range.as_ref())
        .expect("clap requires one grid");
    if let Some(workers) = args.workers {
        if workers == 0 {
            return Err(Failure::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let result = sweep(&config, param, &values.0)?;
    emit(args.out.as_deref(), &result.to_csv())
}

fn cmd_sweep_one(args: SweepOneArgs) -> CliResult<()> {
    let config = build_config(&args.sweep.config, Vec::new())?;
    run_sweep(&args.sweep, SweepParam::Density, config)
}

fn cmd_sweep_two(args: SweepTwoArgs) -> CliResult<()> {
    let flags = vec![
        ("p_intra", args.p_intra.map(|v| v.to_string())),
        ("initial", args.initial.clone()),
    ];
    let config = build_config(&args.sweep.config, flags)?;
    if !matches!(config.topology, Topology::TwoCommunity { .. }) {
        return Err(Failure::Usage(
            "sweep-two needs --p-intra (or p_intra in --config)".into(),
        ));
    }
    run_sweep(&args.sweep, SweepParam::PInter, config)
}

pub const BOUNDS_CSV_HEADER: &str =
    "N,p_intra,p_inter,p_av,k_N,flip_exact,rho_a,rho_r,geom_bound,union_bound";

fn cmd_bounds(args: BoundsArgs) -> CliResult<()> {
    let mut csv = String::from(BOUNDS_CSV_HEADER);
    csv.push('\n');
    for &n in &args.n.0 {
        let params =
            BoundParams::new(n, args.p_intra, args.p_inter)?.with_convention(args.convention);
        let r = union_bound(&params)?;
        let _ = writeln!(
            csv,
            "{n},{},{},{},{},{:e},{},{},{:e},{:e}",
            args.p_intra,
            args.p_inter,
            r.p_av,
            r.k_n,
            r.flip_prob_exact,
            r.rates.rho_a,
            r.rates.rho_r,
            r.geometric_bound,
            r.union_bound
        );
    }
    emit(args.out.as_deref(), &csv)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => cmd_run(a),
        Command::SweepOne(a) => cmd_sweep_one(a),
        Command::SweepTwo(a) => cmd_sweep_two(a),
        Command::Bounds(a) => cmd_bounds(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) | Failure::Runtime(msg) => eprintln!("error: {msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}
