use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use relax_cluster::exec::Execution;
use relax_cluster::experiments::{
    self, AdversarialConfig, Method, PhaseDiagramConfig, SolveOptions, SuccessCriterion,
};
use relax_cluster::heuristics::DEFAULT_FAR_FACTOR;
use relax_cluster::sdp::AdmmConfig;
use relax_cluster::{geometry, ClusterInstance, Distribution, Error};
use serde_json::json;

const EXIT_INVALID: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "relax-cluster", version, about = "Convex relaxations of geometric clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a planted ball instance and write it as JSON.
    Generate(GenerateArgs),
    /// Solve an instance with one method and print a report.
    Solve(SolveArgs),
    /// Build the dual certificate of the planted partition.
    Certify(CertifyArgs),
    /// Monte-Carlo recovery rates over a (Δ, N) grid.
    PhaseDiagram(PhaseArgs),
    /// Lloyd failure rate on the trapping construction, plus relaxation recovery.
    Adversarial(AdversarialArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 3)]
    m: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Points per cluster.
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "uniform-ball")]
    distribution: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long)]
    method: String,
    /// Seed for randomized heuristics.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Omit the wall time so reports are reproducible.
    #[arg(long)]
    no_timing: bool,
    /// Attach the certificate summary.
    #[arg(long)]
    certify: bool,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CertifyArgs {
    instance: PathBuf,
    #[arg(long)]
    method: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PhaseArgs {
    #[arg(long)]
    method: String,
    /// Grid preset: 2 clusters (`two`) or 3 clusters (`three`).
    #[arg(long, default_value = "two")]
    grid: String,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Total point counts N, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Δ values, comma separated.
    #[arg(long, value_delimiter = ',')]
    delta: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Wall-clock budget in seconds; unfinished cells are marked incomplete.
    #[arg(long)]
    time_budget: Option<f64>,
    #[arg(long)]
    sequential: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AdversarialArgs {
    /// Number of three-ball groups.
    #[arg(long, default_value_t = 1)]
    l: usize,
    #[arg(long, default_value_t = 2.5)]
    delta: f64,
    /// Distance from the close pair to the far ball (default 25Δ).
    #[arg(long)]
    d_far: Option<f64>,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    m: usize,
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    /// Fresh instances for the k-median LP and primal-dual comparison.
    #[arg(long, default_value_t = 10)]
    relaxation_trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Invalid(String),
    NotConverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(_) => Failure::NotConverged(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Certify(a) => certify(a),
        Command::PhaseDiagram(a) => phase_diagram(a),
        Command::Adversarial(a) => adversarial(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, kind, msg) = match f {
                Failure::Invalid(m) => (EXIT_INVALID, "invalid-input", m),
                Failure::NotConverged(m) => (EXIT_NOT_CONVERGED, "not-converged", m),
            };
            eprintln!("{}", json!({ "error": kind, "message": msg }));
            ExitCode::from(code)
        }
    }
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn load(path: &Path) -> CliResult<ClusterInstance> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    Ok(ClusterInstance::from_json(&text)?)
}

fn method(s: &str) -> CliResult<Method> {
    Ok(s.parse::<Method>()?)
}

fn generate(a: GenerateArgs) -> CliResult<()> {
    let dist: Distribution = a.distribution.parse()?;
    let inst = geometry::sample_planted(a.m, a.k, a.n, a.delta, dist, a.seed)?;
    emit(&inst.to_json(), a.out.as_deref())
}

fn solve(a: SolveArgs) -> CliResult<()> {
    let inst = load(&a.instance)?;
    let method = method(&a.method)?;
    let mut admm = AdmmConfig::default();
    if let Some(it) = a.max_iter {
        admm.max_iter = it;
    }
    let opts = SolveOptions { seed: a.seed, admm, timing: !a.no_timing, certify: a.certify };
    let report = experiments::run_solve(&inst, method, &opts)?;
    emit(&serde_json::to_string_pretty(&report).map_err(Error::from)?, a.out.as_deref())?;
    if report.non_converged() {
        return Err(Failure::NotConverged(format!("{method} stopped at the iteration limit")));
    }
    Ok(())
}

fn certify(a: CertifyArgs) -> CliResult<()> {
    let inst = load(&a.instance)?;
    let v = experiments::run_certify(&inst, method(&a.method)?)?;
    emit(&serde_json::to_string_pretty(&v).map_err(Error::from)?, a.out.as_deref())
}

fn phase_diagram(a: PhaseArgs) -> CliResult<()> {
    let method = method(&a.method)?;
    let mut cfg = match a.grid.as_str() {
        "two" => PhaseDiagramConfig::two_cluster_grid(method),
        "three" => PhaseDiagramConfig::three_cluster_grid(method),
        other => return Err(Failure::Invalid(format!("unknown grid preset `{other}`"))),
    };
    if let Some(m) = a.m {
        cfg.m = m;
    }
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if !a.n.is_empty() {
        cfg.ns = a.n;
    }
    if !a.delta.is_empty() {
        cfg.deltas = a.delta;
    }
    cfg.trials = a.trials;
    cfg.master_seed = a.seed;
    if let Some(b) = a.time_budget {
        if !(b >= 0.0) || !b.is_finite() {
            return Err(Failure::Invalid(format!("time budget must be a nonnegative number, got {b}")));
        }
        cfg.time_budget = Some(Duration::from_secs_f64(b));
    }
    if a.sequential {
        cfg.exec = Execution::Sequential;
    }
    let grid = experiments::run_phase_diagram(&cfg)?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("grid.json"), serde_json::to_string_pretty(&grid).map_err(Error::from)?)?;
    for (name, criterion) in [("planted", SuccessCriterion::PlantedRecovery), ("integral", SuccessCriterion::IntegralityOnly)] {
        fs::write(a.out.join(format!("{name}.csv")), grid.to_csv(criterion))?;
        experiments::render_heatmap(&grid, criterion, &a.out.join(format!("{name}.pgm")))?;
    }
    for note in &grid.notable {
        eprintln!("note: {note}");
    }
    if !grid.is_complete() {
        eprintln!("note: time budget exhausted, grid is partial");
    }
    Ok(())
}

fn adversarial(a: AdversarialArgs) -> CliResult<()> {
    let cfg = AdversarialConfig {
        groups: a.l,
        delta: a.delta,
        d_far: a.d_far.unwrap_or(DEFAULT_FAR_FACTOR * a.delta),
        n: a.n,
        m: a.m,
        lloyd_trials: a.trials,
        relaxation_trials: a.relaxation_trials,
        seed: a.seed,
    };
    let report = experiments::run_adversarial(&cfg, Execution::default())?;
    emit(&serde_json::to_string_pretty(&report).map_err(Error::from)?, a.out.as_deref())
}
