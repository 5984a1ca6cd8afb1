//! `patrol`: command-line front end for patrol-core.
//!
//! Every run prints a JSON report (config echo, versions, wall time, result)
//! to stdout or to `--report`. Exit codes: 0 success, 1 invalid input or a
//! failed validation, 2 a `reproduce` target that was missed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use patrol_core::chain::{self, metropolis_hastings, stationary_distribution, StrategyMatrix};
use patrol_core::entropy;
use patrol_core::figures::{self, FigureConfig, FigureId};
use patrol_core::graph::{self, distribution_from_json, graph_to_json, load_graph, SurveillanceGraph, VisitDistribution};
use patrol_core::hitting;
use patrol_core::optimize::{self, FeasibleSpec, PgdOptions, DEFAULT_EPSILON_RTE, DEFAULT_RESTARTS};
use patrol_core::returntime;
use patrol_core::sim;
use patrol_core::{par, PatrolError};

#[derive(Parser, Serialize)]
#[command(name = "patrol", version, about = "Markov-chain patrolling strategies")]
struct Cli {
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// Worker threads for restarts and sampling.
    #[arg(long, env = "PATROL_WORKERS", global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Build or convert surveillance graphs.
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Construct and check strategies.
    #[command(subcommand)]
    Chain(ChainCmd),
    /// Mean hitting times, weighted hitting times, meeting times.
    Hit(HitArgs),
    /// Entropy rate of a chain, or the maximum-entropy chain on a graph.
    #[command(subcommand)]
    Entropy(EntropyCmd),
    /// Truncated return-time distribution and entropy.
    Rtent(RtentArgs),
    /// Strategy synthesis.
    Opt(OptArgs),
    /// Monte Carlo simulation.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Rerun a published figure with pinned seeds.
    Reproduce(ReproduceArgs),
    /// Write plot data.
    #[command(subcommand)]
    Export(ExportCmd),
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum GraphCmd {
    /// Rectangular grid, uniform π.
    Grid {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long)]
        no_self_loops: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// The 12-node San Francisco map with crime-rate π.
    Sf {
        #[arg(long)]
        out: PathBuf,
    },
    /// Graphviz DOT of a graph file.
    Dot {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Serialize)]
struct GraphPi {
    #[arg(long)]
    graph: PathBuf,
    /// Visit distribution (JSON array or `{"pi": [...]}`); defaults to the graph's own.
    #[arg(long)]
    pi: Option<PathBuf>,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum ChainCmd {
    /// Metropolis–Hastings chain for the graph's π.
    Mh {
        #[command(flatten)]
        input: GraphPi,
        #[arg(long)]
        out: PathBuf,
    },
    /// Row-stochasticity, support, irreducibility, stationarity, reversibility.
    Validate {
        #[arg(long)]
        chain: PathBuf,
        #[command(flatten)]
        input: GraphPi,
    },
    /// Stationary distribution of a chain.
    Stationary {
        #[arg(long)]
        chain: PathBuf,
    },
}

#[derive(Args, Serialize)]
struct HitArgs {
    #[arg(long)]
    chain: PathBuf,
    /// Use the graph's travel times.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Evader chain; reports meeting times instead.
    #[arg(long)]
    evader: Option<PathBuf>,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum EntropyCmd {
    Rate {
        #[arg(long)]
        chain: PathBuf,
    },
    /// Maximum entropy-rate chain with the graph's π.
    Max {
        #[command(flatten)]
        input: GraphPi,
        #[arg(long, default_value_t = entropy::DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Serialize)]
struct RtentArgs {
    #[arg(long)]
    chain: PathBuf,
    #[command(flatten)]
    input: GraphPi,
    #[arg(long, conflicts_with = "eta")]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    /// Per-node return-time probabilities as CSV.
    #[arg(long)]
    hist: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Problem {
    /// Min Kemeny constant over general chains.
    Kemeny,
    /// Min Kemeny constant over reversible chains.
    KemenyRev,
    /// Min weighted mean hitting time over general chains.
    Weighted,
    /// Min weighted mean hitting time over reversible chains.
    WeightedRev,
    /// Min meeting time against `--evader`.
    Meeting,
    /// Max truncated return-time entropy.
    Rtent,
}

#[derive(Args, Serialize)]
struct OptArgs {
    #[arg(value_enum)]
    problem: Problem,
    #[command(flatten)]
    input: GraphPi,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    restarts: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Lower bound on every edge probability (default 0, or 1e-3 for rtent).
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long)]
    evader: Option<PathBuf>,
    #[arg(long, default_value_t = PgdOptions::default().max_iter)]
    max_iter: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum SimCmd {
    /// One trajectory.
    Run {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        start: usize,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sampled return times at a node.
    Returns {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        node: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1 << 24)]
        max_steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sampled hitting times from `from` to `to`.
    Hit {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        from: usize,
        #[arg(long)]
        to: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1 << 24)]
        max_steps: usize,
    },
}

#[derive(Args, Serialize)]
struct ReproduceArgs {
    #[arg(value_parser = parse_figure)]
    figure: FigureId,
    #[arg(long, default_value_t = figures::SEED)]
    seed: u64,
    /// Override the figure's restart count.
    #[arg(long)]
    restarts: Option<usize>,
    /// Write the resulting strategy as CSV.
    #[arg(long)]
    strategy_out: Option<PathBuf>,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum ExportCmd {
    /// Transition matrix as a grayscale image: one CSV row per state, values in [0, 1].
    Pixels {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_figure(s: &str) -> Result<FigureId, String> {
    s.parse().map_err(|e: PatrolError| e.to_string())
}

/// What a command produced, and whether it should fail the process.
struct Outcome {
    result: Value,
    code: u8,
}

impl From<Value> for Outcome {
    fn from(result: Value) -> Self {
        Self { result, code: 0 }
    }
}

type CliResult = Result<Outcome, PatrolError>;

fn read_chain(path: &Path) -> Result<StrategyMatrix, PatrolError> {
    let text = fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        StrategyMatrix::from_json(&text)
    } else {
        StrategyMatrix::from_csv(&text)
    }
}

fn write(path: &Path, text: &str) -> Result<(), PatrolError> {
    Ok(fs::write(path, text)?)
}

fn graph_and_pi(input: &GraphPi) -> Result<(SurveillanceGraph, VisitDistribution), PatrolError> {
    let (g, own) = load_graph(&input.graph)?;
    let pi = match &input.pi {
        Some(p) => distribution_from_json(&fs::read_to_string(p)?)?,
        None => own.ok_or_else(|| {
            PatrolError::InvalidArgument("no visit distribution: the graph file has none and --pi is missing".into())
        })?,
    };
    if pi.len() != g.n() {
        return Err(PatrolError::DimensionMismatch { expected: g.n(), got: pi.len() });
    }
    Ok((g, pi))
}

fn pixels_csv(p: &StrategyMatrix) -> String {
    p.rows()
        .iter()
        .map(|r| r.iter().map(|v| format!("{:.6}", v.clamp(0.0, 1.0))).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

fn run_graph(cmd: &GraphCmd) -> CliResult {
    match cmd {
        GraphCmd::Grid { rows, cols, no_self_loops, out } => {
            let g = graph::make_grid(*rows, *cols, !no_self_loops)?;
            let pi = graph::grid_uniform_pi(&g);
            write(out, &graph_to_json(&g, Some(&pi))?)?;
            Ok(json!({ "n": g.n(), "edges": g.edge_count() }).into())
        }
        GraphCmd::Sf { out } => {
            let (g, pi) = graph::sf_dataset();
            write(out, &graph_to_json(&g, Some(&pi))?)?;
            Ok(json!({ "n": g.n(), "edges": g.edge_count(), "labels": graph::SF_LABELS }).into())
        }
        GraphCmd::Dot { graph, out } => {
            let (g, _) = load_graph(graph)?;
            write(out, &g.to_dot())?;
            Ok(json!({ "n": g.n() }).into())
        }
    }
}

fn run_chain(cmd: &ChainCmd) -> CliResult {
    match cmd {
        ChainCmd::Mh { input, out } => {
            let (g, pi) = graph_and_pi(input)?;
            let p = metropolis_hastings(&g, &pi)?;
            write(out, &p.to_csv())?;
            Ok(json!({ "kemeny": hitting::mean_hitting_times(&p)?.kemeny }).into())
        }
        ChainCmd::Validate { chain, input } => {
            let p = read_chain(chain)?;
            let (g, own) = load_graph(&input.graph)?;
            let pi = match &input.pi {
                Some(path) => Some(distribution_from_json(&fs::read_to_string(path)?)?),
                None => own,
            };
            let report = chain::validate(&p, &g, pi.as_ref())?;
            let code = if report.row_stochastic && report.support_ok && report.irreducible && report.stationary_ok != Some(false) {
                0
            } else {
                1
            };
            Ok(Outcome { result: serde_json::to_value(&report)?, code })
        }
        ChainCmd::Stationary { chain } => {
            let pi = stationary_distribution(&read_chain(chain)?)?;
            Ok(json!({ "pi": pi.as_slice() }).into())
        }
    }
}

fn run_hit(args: &HitArgs) -> CliResult {
    let p = read_chain(&args.chain)?;
    if let Some(e) = &args.evader {
        let pe = read_chain(e)?;
        let pi_p = stationary_distribution(&p).ok();
        let pi_e = stationary_distribution(&pe).ok();
        let m = hitting::meeting_times(&p, &pe, pi_p.as_ref(), pi_e.as_ref())?;
        return Ok(serde_json::to_value(&m)?.into());
    }
    let summary = match &args.graph {
        Some(path) => {
            let (g, _) = load_graph(path)?;
            hitting::weighted_mean_hitting_times(&p, &g)?
        }
        None => hitting::mean_hitting_times(&p)?,
    };
    Ok(serde_json::to_value(&summary)?.into())
}

fn run_entropy(cmd: &EntropyCmd) -> CliResult {
    match cmd {
        EntropyCmd::Rate { chain } => {
            let p = read_chain(chain)?;
            let pi = stationary_distribution(&p)?;
            Ok(json!({ "entropy_rate": entropy::entropy_rate(&p, &pi)? }).into())
        }
        EntropyCmd::Max { input, tol, out } => {
            let (g, pi) = graph_and_pi(input)?;
            let sol = entropy::maximize_entropy_rate(&g, &pi, *tol, entropy::DEFAULT_MAX_ITER)?;
            if let Some(out) = out {
                write(out, &sol.p_star.to_csv())?;
            }
            Ok(serde_json::to_value(&sol)?.into())
        }
    }
}

fn run_rtent(args: &RtentArgs) -> CliResult {
    let p = read_chain(&args.chain)?;
    let (g, pi) = graph_and_pi(&args.input)?;
    let horizon = match args.horizon {
        Some(h) => h,
        None => returntime::truncation_horizon(&g, &pi, args.eta)?,
    };
    let value = returntime::return_time_entropy(&p, &g, &pi, horizon)?;
    let series = returntime::return_time_distribution(&p, &g, horizon)?;
    if let Some(path) = &args.hist {
        write(path, &series.histogram_csv())?;
    }
    Ok(json!({ "horizon": horizon, "entropy": value, "tail_bound": series.tail_bound }).into())
}

fn run_opt(args: &OptArgs) -> CliResult {
    let (g, pi) = graph_and_pi(&args.input)?;
    let opts = PgdOptions { max_iter: args.max_iter, ..PgdOptions::default() };
    let default_eps = if matches!(args.problem, Problem::Rtent) { DEFAULT_EPSILON_RTE } else { 0.0 };
    let eps = args.epsilon.unwrap_or(default_eps);
    let reversible = matches!(args.problem, Problem::KemenyRev | Problem::WeightedRev);
    let spec = FeasibleSpec::new(g.clone(), pi, eps, reversible)?;
    let r = match args.problem {
        Problem::Kemeny => optimize::minimize_mean_hitting(&spec, args.restarts, args.seed, &opts)?,
        Problem::KemenyRev => optimize::minimize_mean_hitting_reversible(&spec, false, args.seed, &opts)?,
        Problem::Weighted => optimize::minimize_weighted_mean_hitting(&spec, args.restarts, args.seed, &opts)?,
        Problem::WeightedRev => optimize::minimize_mean_hitting_reversible(&spec, true, args.seed, &opts)?,
        Problem::Meeting => {
            let path = args
                .evader
                .as_ref()
                .ok_or_else(|| PatrolError::InvalidArgument("meeting needs --evader".into()))?;
            let evader = read_chain(path)?;
            let pi_e = stationary_distribution(&evader)?;
            optimize::minimize_meeting_time(&spec, &evader, &pi_e, args.restarts, args.seed, &opts)?
        }
        Problem::Rtent => optimize::maximize_return_entropy(&spec, args.eta, args.restarts, args.seed, &opts)?,
    };
    if let Some(out) = &args.out {
        write(out, &r.p.to_csv())?;
    }
    let mut v = serde_json::to_value(&r)?;
    v["validation"] = serde_json::to_value(chain::validate(&r.p, &g, Some(&spec.pi))?)?;
    Ok(v.into())
}

fn run_sim(cmd: &SimCmd) -> CliResult {
    match cmd {
        SimCmd::Run { chain, graph, start, steps, seed, out } => {
            let p = read_chain(chain)?;
            let (g, _) = load_graph(graph)?;
            let t = sim::simulate(&p, &g, *start, *steps, *seed)?;
            if let Some(out) = out {
                write(out, &t.to_csv())?;
            }
            let freq = sim::empirical_visit_frequency(std::slice::from_ref(&t), g.n())?;
            Ok(json!({ "steps": steps, "elapsed": t.clock.last(), "visit_frequency": freq.freq }).into())
        }
        SimCmd::Returns { chain, graph, node, samples, seed, max_steps, out } => {
            let p = read_chain(chain)?;
            let (g, _) = load_graph(graph)?;
            let h = sim::sample_return_histogram(&p, &g, *node, *samples, *seed, *max_steps)?;
            if let Some(out) = out {
                write(out, &h.to_csv())?;
            }
            Ok(json!({ "mean": h.mean()?, "plugin_entropy": h.entropy(), "samples": h.total() }).into())
        }
        SimCmd::Hit { chain, graph, from, to, samples, seed, max_steps } => {
            let p = read_chain(chain)?;
            let (g, _) = load_graph(graph)?;
            let times = sim::sample_hitting_times(&p, &g, *from, *to, *samples, *seed, *max_steps)?;
            let est = sim::Estimate::from_samples(times.into_iter().map(|t| t as f64))?;
            Ok(json!({ "mean": est }).into())
        }
    }
}

fn run_reproduce(args: &ReproduceArgs) -> CliResult {
    let cfg = FigureConfig { seed: args.seed, restarts: args.restarts, ..FigureConfig::default() };
    let r = figures::reproduce_with(args.figure, &cfg)?;
    if let (Some(path), Some(p)) = (&args.strategy_out, &r.strategy) {
        write(path, &p.to_csv())?;
    }
    let code = if r.pass { 0 } else { 2 };
    Ok(Outcome { result: serde_json::to_value(&r)?, code })
}

fn run_export(cmd: &ExportCmd) -> CliResult {
    match cmd {
        ExportCmd::Pixels { chain, out } => {
            let p = read_chain(chain)?;
            write(out, &pixels_csv(&p))?;
            Ok(json!({ "rows": p.n(), "cols": p.n() }).into())
        }
    }
}

fn dispatch(cmd: &Command) -> CliResult {
    match cmd {
        Command::Graph(c) => run_graph(c),
        Command::Chain(c) => run_chain(c),
        Command::Hit(a) => run_hit(a),
        Command::Entropy(c) => run_entropy(c),
        Command::Rtent(a) => run_rtent(a),
        Command::Opt(a) => run_opt(a),
        Command::Sim(c) => run_sim(c),
        Command::Reproduce(a) => run_reproduce(a),
        Command::Export(c) => run_export(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        par::init_workers(w);
    }
    let start = Instant::now();
    let outcome = dispatch(&cli.command);
    let (status, result, code) = match outcome {
        Ok(o) => ("ok", o.result, o.code),
        Err(e) => ("error", json!({ "error": e.to_string() }), 1),
    };
    let report = json!({
        "status": status,
        "config": &cli,
        "versions": {
            "patrol": env!("CARGO_PKG_VERSION"),
            "prng": sim::PRNG_NAME,
        },
        "workers": par::worker_count(),
        "wall_ms": start.elapsed().as_millis() as u64,
        "result": result,
    });
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    match &cli.report {
        Some(path) => {
            if let Err(e) = fs::write(path, text + "\n") {
                eprintln!("cannot write report: {e}");
                return ExitCode::from(1);
            }
        }
        None => println!("{text}"),
    }
    if status == "error" {
        if let Some(msg) = result.get("error") {
            eprintln!("error: {}", msg.as_str().unwrap_or_default());
        }
    }
    ExitCode::from(code)
}
