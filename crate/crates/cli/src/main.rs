//! `datsgd` command-line driver.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use datsgd::harness::{self, Budget, SweepSpec, DEFAULT_LR_GRID, DEFAULT_SEEDS};
use datsgd::optim::{self, Algorithm, RunConfig, WeightSchedule};
use datsgd::theory::{self, TheoryInputs, TopologyClass};
use datsgd::topology::{self, GossipSequence, TopologySpec};

#[derive(Parser)]
#[command(name = "datsgd", version, about = "Decentralized Anytime SGD simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the spectral gap of a topology.
    Gap(GapArgs),
    /// Run one simulation and write its metric trace as CSV.
    Run(RunArgs),
    /// Sweep machine counts, grid-searching the learning rate per cell.
    Sweep(SweepArgs),
    /// Grid-search the learning rate of one configuration.
    GridSearch(GridArgs),
    /// Compare seed-averaged diagnostics with their theoretical bounds.
    BoundCheck(BoundArgs),
    /// Evaluate the learning-rate and convergence formulas.
    Theory(TheoryArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TopologyArg {
    Ring,
    Torus,
    Complete,
    OnePeerExp,
}

#[derive(Args)]
struct GapArgs {
    #[arg(long, value_enum)]
    topology: Option<TopologyArg>,
    /// Machine count (ring, complete, one-peer-exp).
    #[arg(long)]
    machines: Option<usize>,
    /// Torus rows.
    #[arg(long)]
    rows: Option<usize>,
    /// Torus columns.
    #[arg(long)]
    cols: Option<usize>,
    /// JSON file with a square boolean adjacency matrix; replaces --topology.
    #[arg(long, conflicts_with_all = ["topology", "machines", "rows", "cols"])]
    adjacency: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Dsgd,
    Datsgd,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Dsgd => Algorithm::Dsgd,
            AlgorithmArg::Datsgd => Algorithm::Datsgd,
        }
    }
}

/// Flags that override fields of a run config file. Unset flags keep the
/// file's value.
#[derive(Args)]
struct Overrides {
    /// Algorithm [default: from config]
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmArg>,
    /// Learning rate eta [default: from config]
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Number of rounds T [default: from config]
    #[arg(long)]
    rounds: Option<usize>,
    /// Noise seed [default: from config]
    #[arg(long)]
    seed: Option<u64>,
    /// Problem-instance seed [default: from config, else the noise seed]
    #[arg(long)]
    problem_seed: Option<u64>,
    /// Record metrics every this many rounds, plus the first and last [default: from config]
    #[arg(long)]
    metric_stride: Option<usize>,
}

impl Overrides {
    fn apply(&self, config: &mut RunConfig) {
        if let Some(a) = self.algorithm {
            config.algorithm = a.into();
        }
        if let Some(eta) = self.learning_rate {
            config.learning_rate = eta;
        }
        if let Some(t) = self.rounds {
            config.rounds = t;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(s) = self.problem_seed {
            config.problem_seed = Some(s);
        }
        if let Some(s) = self.metric_stride {
            config.metric_stride = s;
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Run config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Trace CSV destination.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Result CSV destination.
    #[arg(long)]
    output: PathBuf,
    /// Also write the full result table, with configs, as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Comma-separated seeds, replacing the spec's.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated learning rates, replacing the spec's.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Rounds per run, replacing the base config's.
    #[arg(long)]
    rounds: Option<usize>,
    /// Fixed total sample budget N; each machine count runs N / M rounds.
    #[arg(long)]
    total_samples: Option<usize>,
}

#[derive(Args)]
struct GridArgs {
    /// Run config (JSON); its learning rate is ignored.
    #[arg(long)]
    config: PathBuf,
    /// Result CSV destination.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LR_GRID.to_vec())]
    grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SEEDS.to_vec())]
    seeds: Vec<u64>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct BoundArgs {
    /// Run config (JSON); must use datsgd with linear weights.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SEEDS.to_vec())]
    seeds: Vec<u64>,
    /// Write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassArg {
    Ring,
    Torus,
    NearComplete,
}

impl From<ClassArg> for TopologyClass {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Ring => TopologyClass::Ring,
            ClassArg::Torus => TopologyClass::Torus,
            ClassArg::NearComplete => TopologyClass::NearComplete,
        }
    }
}

#[derive(Args)]
struct TheoryArgs {
    /// Smoothness L.
    #[arg(long, allow_negative_numbers = true)]
    smoothness: f64,
    /// Rounds T.
    #[arg(long, allow_negative_numbers = true)]
    rounds: f64,
    /// Spectral gap rho.
    #[arg(long, allow_negative_numbers = true)]
    gap: f64,
    /// Machine count M.
    #[arg(long, allow_negative_numbers = true)]
    machines: f64,
    #[arg(long, allow_negative_numbers = true)]
    sigma: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    zeta: f64,
    /// Initial distance D1 = |w_1 - x*|.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    initial_distance: f64,
    /// Learning rate for the consensus bound (defaults to the theoretical rate).
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<f64>,
    /// Also print the parallelism bound for this topology class at N = M T.
    #[arg(long, value_enum)]
    class: Option<ClassArg>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gap(a) => cmd_gap(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::GridSearch(a) => cmd_grid(a),
        Command::BoundCheck(a) => cmd_bound(a),
        Command::Theory(a) => cmd_theory(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn topology_from_args(a: &GapArgs) -> Result<TopologySpec> {
    if let Some(path) = &a.adjacency {
        let adjacency: Vec<Vec<bool>> = serde_json::from_str(&read(path)?)
            .with_context(|| format!("parsing adjacency matrix {}", path.display()))?;
        return Ok(TopologySpec::Custom { adjacency });
    }
    let Some(kind) = a.topology else {
        bail!("either --topology or --adjacency is required");
    };
    let machines = || a.machines.context("--machines is required for this topology");
    Ok(match kind {
        TopologyArg::Ring => TopologySpec::Ring { machines: machines()? },
        TopologyArg::Complete => TopologySpec::Complete { machines: machines()? },
        TopologyArg::OnePeerExp => TopologySpec::OnePeerExp { machines: machines()? },
        TopologyArg::Torus => match (a.rows, a.cols, a.machines) {
            (Some(rows), Some(cols), _) => TopologySpec::Torus { rows, cols },
            (None, None, Some(m)) => {
                TopologySpec::for_machines(datsgd::topology::TopologyKind::Torus, m)?
            }
            _ => bail!("torus needs --rows and --cols (or a perfect-square --machines)"),
        },
    })
}

fn cmd_gap(a: GapArgs) -> Result<()> {
    let spec = topology_from_args(&a)?;
    let seq = topology::build(&spec)?;
    let gap = match &seq {
        GossipSequence::Static(p) => topology::spectral_gap(p)?,
        GossipSequence::Periodic(_) => seq.effective_gap()?,
    };
    println!("{gap}");
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let mut config = RunConfig::from_json_str(&read(path)?)
        .with_context(|| format!("invalid config {}", path.display()))?;
    overrides.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let config = load_config(&a.config, &a.overrides)?;
    let out = optim::run(&config)?;
    out.trace
        .write_csv_path(&a.output)
        .with_context(|| format!("writing {}", a.output.display()))?;
    let f = out.final_metrics;
    println!(
        "final_excess_loss={:e} final_per_node_error={:e} final_consensus_distance={:e}",
        f.excess_loss, f.per_node_error, f.consensus_distance
    );
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let mut spec = SweepSpec::from_json_str(&read(&a.spec)?)
        .with_context(|| format!("invalid sweep spec {}", a.spec.display()))?;
    if let Some(seeds) = a.seeds {
        spec.seeds = seeds;
    }
    if let Some(grid) = a.grid {
        spec.grid = grid;
    }
    if let Some(t) = a.rounds {
        spec.base.rounds = t;
    }
    if let Some(n) = a.total_samples {
        spec.budget = Budget::FixedSamples { total_samples: n };
    }
    let result = harness::sweep_machines(&spec)?;
    result.table.write_csv_path(&a.output)?;
    if let Some(path) = a.json {
        fs::write(&path, result.table.to_json()?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    for ((kind, m, alg), grid) in &result.grids {
        match grid {
            Some(g) => println!("{kind} M={m} {alg}: eta={}", g.best_eta),
            None => println!("{kind} M={m} {alg}: no stable learning rate"),
        }
    }
    Ok(())
}

fn cmd_grid(a: GridArgs) -> Result<()> {
    let config = load_config(&a.config, &a.overrides)?;
    let result = harness::grid_search(&config, &a.grid, &a.seeds)?;
    result.table.write_csv_path(&a.output)?;
    for (eta, score) in &result.scores {
        match score {
            Some(s) => println!("eta={eta} mean_final_error={s:e}"),
            None => println!("eta={eta} failed"),
        }
    }
    println!("best_eta={}", result.best_eta);
    Ok(())
}

fn cmd_bound(a: BoundArgs) -> Result<()> {
    let mut config = load_config(&a.config, &a.overrides)?;
    if config.schedule != WeightSchedule::Linear {
        bail!("bound-check requires the linear weight schedule");
    }
    config.algorithm = Algorithm::Datsgd;
    let r = harness::bound_check(&config, &a.seeds)?;
    println!("eta={:e} threshold={:e}", r.learning_rate, r.lr_threshold);
    println!(
        "gamma_bound={:e} max_gamma_ratio={:e}",
        r.gamma_bound, r.max_gamma_ratio
    );
    println!(
        "mean_final_excess_loss={:e} convergence_bound={:e} ratio={:e}",
        r.mean_final_excess_loss, r.convergence_bound, r.excess_loss_ratio
    );
    if let Some(path) = a.json {
        fs::write(&path, serde_json::to_string_pretty(&r)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// `v` with 12 significant digits.
fn sig12(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-4..12).contains(&exp) {
        format!("{:.*}", (11 - exp) as usize, v)
    } else {
        format!("{v:.11e}")
    }
}

fn cmd_theory(a: TheoryArgs) -> Result<()> {
    let inputs = TheoryInputs {
        smoothness: a.smoothness,
        rounds: a.rounds,
        gap: a.gap,
        machines: a.machines,
        sigma: a.sigma,
        zeta: a.zeta,
        initial_distance: a.initial_distance,
    };
    inputs.check()?;
    let lr = theory::theoretical_lr(&inputs)?;
    let bound = theory::convergence_bound(&inputs)?;
    let eta = a.eta.unwrap_or(lr);
    let gamma = theory::gamma_bound(eta, inputs.gap, inputs.sigma, inputs.zeta)?;
    let transient = theory::transient_complexity(inputs.machines, inputs.gap)?;
    println!("lr = {}", sig12(lr));
    println!("bound = {}", sig12(bound));
    println!("gamma_bound = {}", sig12(gamma));
    println!("transient = {}", sig12(transient));
    if let Some(class) = a.class {
        let n = inputs.machines * inputs.rounds;
        for alg in [Algorithm::Dsgd, Algorithm::Datsgd] {
            let m = theory::parallelism_bound(class.into(), alg, n, inputs.gap)?;
            println!("parallelism_{alg} = {}", sig12(m));
        }
    }
    Ok(())
}
