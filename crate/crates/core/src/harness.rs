//! Seed-replicated runs, learning-rate grid search, machine-count sweeps and
//! theory-vs-simulation checks.
//!
//! Every simulation cell is independent, so cells run in parallel on the
//! rayon pool. Results are collected in input order and every random draw is
//! keyed by seeds, so output does not depend on the thread count.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{param, Error, Result};
use crate::optim::{self, Algorithm, RunConfig, WeightSchedule};
use crate::problem::LeastSquaresProblem;
use crate::seed::{derive_seed, tag};
use crate::theory::{self, TheoryInputs};
use crate::topology::{self, TopologyKind, TopologySpec};

/// Learning-rate grid of the synthetic least-squares experiments.
pub const DEFAULT_LR_GRID: [f64; 7] = [0.0001, 0.0005, 0.001, 0.005, 0.01, 0.05, 0.1];

/// Default number of rounds for desk-scale sweeps.
pub const DEFAULT_ROUNDS: usize = 20_000;

/// Default replica seeds.
pub const DEFAULT_SEEDS: [u64; 3] = [0, 1, 2];

/// Result CSV header.
pub const RESULT_COLUMNS: [&str; 9] = [
    "topology",
    "algorithm",
    "machines",
    "sigma",
    "zeta",
    "eta",
    "seed",
    "final_error",
    "diverged",
];

/// Identifier of a row: a concrete seed or an aggregate over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedLabel {
    Seed(u64),
    Mean,
    Std,
}

impl std::fmt::Display for SeedLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SeedLabel::Seed(s) => write!(f, "{s}"),
            SeedLabel::Mean => f.write_str("mean"),
            SeedLabel::Std => f.write_str("std"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// Hash of the full run config for seed rows; hash of the member
    /// fingerprints for aggregate rows.
    pub fingerprint: String,
    pub topology: TopologyKind,
    pub algorithm: Algorithm,
    pub machines: usize,
    pub sigma: f64,
    pub zeta: f64,
    pub eta: Option<f64>,
    pub seed: SeedLabel,
    /// Final per-node error of the output variable.
    pub final_error: Option<f64>,
    /// Final excess loss of the output variable's consensus mean.
    pub final_excess_loss: Option<f64>,
    pub diverged: bool,
    /// Divergence or other run error, if any.
    pub error: Option<String>,
}

/// Per-seed rows followed by their aggregate rows, plus the configs needed to
/// regenerate every seed row.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub configs: BTreeMap<String, RunConfig>,
}

impl ResultTable {
    pub fn extend(&mut self, other: ResultTable) {
        self.rows.extend(other.rows);
        self.configs.extend(other.configs);
    }

    pub fn seed_rows(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows
            .iter()
            .filter(|r| matches!(r.seed, SeedLabel::Seed(_)))
    }

    pub fn aggregate(&self, label: SeedLabel) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.seed == label)
    }

    /// The config that produced a seed row.
    pub fn config_for(&self, row: &ResultRow) -> Option<&RunConfig> {
        self.configs.get(&row.fingerprint)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(RESULT_COLUMNS)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            wtr.write_record([
                r.topology.as_str().to_string(),
                r.algorithm.as_str().to_string(),
                r.machines.to_string(),
                r.sigma.to_string(),
                r.zeta.to_string(),
                opt(r.eta),
                r.seed.to_string(),
                opt(r.final_error),
                r.diverged.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// SHA-256 of the config's canonical JSON, hex encoded.
pub fn fingerprint(config: &RunConfig) -> String {
    hex_digest(config.to_json().as_bytes())
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Runs one cell and turns the outcome into a seed row.
fn run_cell(config: &RunConfig) -> ResultRow {
    let outcome = optim::run(config);
    let (final_error, final_excess_loss, diverged, error) = match outcome {
        Ok(out) => (
            Some(out.final_metrics.per_node_error),
            Some(out.final_metrics.excess_loss),
            false,
            None,
        ),
        Err(e @ Error::Divergence { .. }) => (None, None, true, Some(e.to_string())),
        Err(e) => (None, None, false, Some(e.to_string())),
    };
    ResultRow {
        fingerprint: fingerprint(config),
        topology: config.topology.kind(),
        algorithm: config.algorithm,
        machines: config.topology.machines(),
        sigma: config.problem.sigma,
        zeta: config.problem.zeta,
        eta: Some(config.learning_rate),
        seed: SeedLabel::Seed(config.seed),
        final_error,
        final_excess_loss,
        diverged,
        error,
    }
}

fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, std))
}

/// Appends mean and std rows for `members` (all from one group). Diverged or
/// failed runs are excluded from the statistics and flag the aggregate.
fn aggregate_rows(members: &[ResultRow]) -> [ResultRow; 2] {
    let mut sorted: Vec<&ResultRow> = members.iter().collect();
    sorted.sort_by_key(|r| match r.seed {
        SeedLabel::Seed(s) => s,
        _ => u64::MAX,
    });
    let errors: Vec<f64> = sorted.iter().filter_map(|r| r.final_error).collect();
    let excess: Vec<f64> = sorted.iter().filter_map(|r| r.final_excess_loss).collect();
    let any_failed = sorted.iter().any(|r| r.final_error.is_none());
    let joined: Vec<&str> = sorted.iter().map(|r| r.fingerprint.as_str()).collect();
    let fp = hex_digest(joined.join(",").as_bytes());
    let first = sorted[0];
    let make = |label, err: Option<f64>, ex: Option<f64>| ResultRow {
        fingerprint: fp.clone(),
        seed: label,
        final_error: err,
        final_excess_loss: ex,
        diverged: any_failed,
        error: None,
        ..first.clone()
    };
    let e = mean_std(&errors);
    let x = mean_std(&excess);
    [
        make(SeedLabel::Mean, e.map(|v| v.0), x.map(|v| v.0)),
        make(SeedLabel::Std, e.map(|v| v.1), x.map(|v| v.1)),
    ]
}

fn check_seeds(seeds: &[u64]) -> Result<Vec<u64>> {
    if seeds.is_empty() {
        return Err(param("seed list must be nonempty"));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    Ok(sorted)
}

/// Runs every config in parallel and returns their rows in input order.
fn run_cells(configs: &[RunConfig]) -> Vec<ResultRow> {
    configs.par_iter().map(run_cell).collect()
}

fn table_for_group(configs: Vec<RunConfig>, rows: Vec<ResultRow>) -> ResultTable {
    let aggregates = aggregate_rows(&rows);
    let mut table = ResultTable::default();
    for (c, r) in configs.into_iter().zip(&rows) {
        table.configs.insert(r.fingerprint.clone(), c);
    }
    table.rows = rows;
    table.rows.extend(aggregates);
    table
}

/// One run per seed plus mean/std rows. Seeds are processed in sorted order.
pub fn run_seeds(config: &RunConfig, seeds: &[u64]) -> Result<ResultTable> {
    config.validate()?;
    let seeds = check_seeds(seeds)?;
    let configs: Vec<RunConfig> = seeds
        .iter()
        .map(|&s| RunConfig {
            seed: s,
            ..config.clone()
        })
        .collect();
    let rows = run_cells(&configs);
    Ok(table_for_group(configs, rows))
}

/// Outcome of a learning-rate grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_eta: f64,
    /// Seed-mean final error per grid value; `None` when any seed failed.
    pub scores: Vec<(f64, Option<f64>)>,
    pub table: ResultTable,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(param("learning-rate grid must be nonempty"));
    }
    if let Some(bad) = grid.iter().find(|&&g| !(g > 0.0 && g.is_finite())) {
        return Err(param(format!("learning rates must be positive, got {bad}")));
    }
    Ok(())
}

/// Grid search where `make(eta, seed)` builds each cell's config.
fn grid_search_with<F>(grid: &[f64], seeds: &[u64], make: F) -> Result<GridSearchResult>
where
    F: Fn(f64, u64) -> RunConfig,
{
    check_grid(grid)?;
    let seeds = check_seeds(seeds)?;
    let mut etas = grid.to_vec();
    etas.sort_by(f64::total_cmp);
    etas.dedup();

    let configs: Vec<RunConfig> = etas
        .iter()
        .flat_map(|&eta| seeds.iter().map(move |&s| (eta, s)))
        .map(|(eta, s)| make(eta, s))
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let rows = run_cells(&configs);

    let mut table = ResultTable::default();
    let mut scores = Vec::with_capacity(etas.len());
    let per_eta = seeds.len();
    for (k, &eta) in etas.iter().enumerate() {
        let range = k * per_eta..(k + 1) * per_eta;
        let group = table_for_group(configs[range.clone()].to_vec(), rows[range].to_vec());
        let mean = &group.rows[per_eta];
        let score = if mean.diverged { None } else { mean.final_error };
        scores.push((eta, score));
        table.extend(group);
    }

    let mut best: Option<(f64, f64)> = None;
    for &(eta, score) in &scores {
        if let Some(s) = score {
            // strict improvement keeps the smaller eta on ties
            if best.map_or(true, |(_, b)| s < b) {
                best = Some((eta, s));
            }
        }
    }
    let (best_eta, _) = best.ok_or(Error::NoStableLearningRate { grid: etas })?;
    Ok(GridSearchResult {
        best_eta,
        scores,
        table,
    })
}

/// Picks the learning rate with the lowest seed-mean final per-node error of
/// the output variable. Rates where any seed fails are not eligible; ties go
/// to the smaller rate.
pub fn grid_search(config: &RunConfig, grid: &[f64], seeds: &[u64]) -> Result<GridSearchResult> {
    grid_search_with(grid, seeds, |eta, seed| RunConfig {
        learning_rate: eta,
        seed,
        ..config.clone()
    })
}

/// How the round count is chosen for each machine count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Budget {
    /// Every machine count runs `base.rounds` rounds.
    #[default]
    FixedRounds,
    /// Total sample budget `N`; each machine count runs `max(1, N / M)` rounds.
    FixedSamples { total_samples: usize },
}

fn default_grid() -> Vec<f64> {
    DEFAULT_LR_GRID.to_vec()
}

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Dsgd, Algorithm::Datsgd]
}

/// A machine-count sweep over topologies and algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Template config; its topology size, algorithm, learning rate and seed
    /// are overridden per cell.
    pub base: RunConfig,
    pub topologies: Vec<TopologyKind>,
    pub machines: Vec<usize>,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub budget: Budget,
}

impl SweepSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner()))
        })
    }

    /// Checks every (topology, machine count) pair up front.
    pub fn topology_specs(&self) -> Result<Vec<TopologySpec>> {
        if self.topologies.is_empty() || self.machines.is_empty() || self.algorithms.is_empty() {
            return Err(param("sweep needs at least one topology, machine count and algorithm"));
        }
        let mut specs = Vec::new();
        for &kind in &self.topologies {
            for &m in &self.machines {
                let spec = TopologySpec::for_machines(kind, m).map_err(|e| {
                    param(format!("topology {kind} with {m} machines: {e}"))
                })?;
                specs.push(spec);
            }
        }
        Ok(specs)
    }

    fn rounds_for(&self, machines: usize) -> usize {
        match self.budget {
            Budget::FixedRounds => self.base.rounds,
            Budget::FixedSamples { total_samples } => (total_samples / machines).max(1),
        }
    }
}

/// Problem seed of a sweep cell: depends on the replica seed (or the base
/// problem seed), the machine count and the topology family.
pub fn sweep_problem_seed(base_seed: u64, machines: usize, kind: TopologyKind) -> u64 {
    derive_seed(&[tag::SWEEP, base_seed, machines as u64, kind.code()])
}

/// Outcome of a sweep: the selected-rate rows and each cell's grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// For every (topology, machines, algorithm): seed rows and mean/std rows
    /// at the selected learning rate.
    pub table: ResultTable,
    pub grids: Vec<((TopologyKind, usize, Algorithm), Option<GridSearchResult>)>,
}

/// For each topology and machine count, grid-searches every algorithm and
/// records the selected learning rate's final errors.
pub fn sweep_machines(spec: &SweepSpec) -> Result<SweepResult> {
    check_grid(&spec.grid)?;
    check_seeds(&spec.seeds)?;
    let specs = spec.topology_specs()?;
    let mut table = ResultTable::default();
    let mut grids = Vec::new();
    for topo in specs {
        let m = topo.machines();
        let kind = topo.kind();
        for &algorithm in &spec.algorithms {
            let base = RunConfig {
                algorithm,
                topology: topo.clone(),
                rounds: spec.rounds_for(m),
                problem: crate::problem::ProblemParams {
                    machines: None,
                    ..spec.base.problem.clone()
                },
                ..spec.base.clone()
            };
            let make = |eta: f64, seed: u64| RunConfig {
                learning_rate: eta,
                seed,
                problem_seed: Some(sweep_problem_seed(
                    spec.base.problem_seed.unwrap_or(seed),
                    m,
                    kind,
                )),
                ..base.clone()
            };
            match grid_search_with(&spec.grid, &spec.seeds, make) {
                Ok(result) => {
                    let chosen = ResultTable {
                        rows: result
                            .table
                            .rows
                            .iter()
                            .filter(|r| r.eta == Some(result.best_eta))
                            .cloned()
                            .collect(),
                        configs: result.table.configs.clone(),
                    };
                    let mut chosen = chosen;
                    chosen
                        .configs
                        .retain(|fp, _| chosen.rows.iter().any(|r| &r.fingerprint == fp));
                    table.extend(chosen);
                    grids.push(((kind, m, algorithm), Some(result)));
                }
                Err(Error::NoStableLearningRate { .. }) => {
                    table.rows.push(ResultRow {
                        fingerprint: fingerprint(&base),
                        topology: kind,
                        algorithm,
                        machines: m,
                        sigma: base.problem.sigma,
                        zeta: base.problem.zeta,
                        eta: None,
                        seed: SeedLabel::Mean,
                        final_error: None,
                        final_excess_loss: None,
                        diverged: true,
                        error: Some("no stable learning rate".into()),
                    });
                    grids.push(((kind, m, algorithm), None));
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(SweepResult { table, grids })
}

/// Theory inputs for a config: `L` and `D1 = ||w_1 - x*||` from its problem,
/// `rho` from its topology's effective gap.
pub fn theory_inputs_for(config: &RunConfig) -> Result<TheoryInputs> {
    config.validate()?;
    let seq = topology::build(&config.topology)?;
    let problem =
        LeastSquaresProblem::from_params(&config.problem, seq.machines(), config.problem_seed())?;
    let x_star = problem.optimum()?.point;
    let w1 = config.initial_point.resolve(problem.dimension())?;
    Ok(TheoryInputs {
        smoothness: problem.smoothness(),
        rounds: config.rounds as f64,
        gap: seq.effective_gap()?.value(),
        machines: seq.machines() as f64,
        sigma: config.problem.sigma,
        zeta: config.problem.zeta,
        initial_distance: (w1 - x_star).norm(),
    })
}

/// Comparison of seed-averaged diagnostics with their theoretical bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub inputs: TheoryInputs,
    pub learning_rate: f64,
    pub lr_threshold: f64,
    pub gamma_bound: f64,
    /// `(round, seed-mean Gamma_t)` for every recorded round.
    pub mean_gamma: Vec<(usize, f64)>,
    pub max_gamma_ratio: f64,
    /// Seed-mean `f(xbar_T) - f*` at the last recorded round `T`.
    pub mean_final_excess_loss: f64,
    pub convergence_bound: f64,
    pub excess_loss_ratio: f64,
    pub seeds: usize,
}

fn ratio(empirical: f64, bound: f64) -> f64 {
    if empirical == 0.0 {
        0.0
    } else {
        empirical / bound
    }
}

/// Runs DAT-SGD with linear weights over `seeds` (noise only; the problem
/// instance is fixed by `config.problem_seed()`) and compares seed means
/// against the consensus and excess-loss bounds.
pub fn bound_check(config: &RunConfig, seeds: &[u64]) -> Result<BoundReport> {
    if config.algorithm != Algorithm::Datsgd || config.schedule != WeightSchedule::Linear {
        return Err(param("bound_check requires algorithm datsgd with linear weights"));
    }
    let seeds = check_seeds(seeds)?;
    let inputs = theory_inputs_for(config)?;
    let threshold = theory::gamma_bound_threshold(inputs.gap, inputs.smoothness);
    if config.learning_rate > threshold {
        return Err(param(format!(
            "learning rate {} exceeds the consensus-bound threshold rho^2/(8 sqrt(80) L) = {threshold}",
            config.learning_rate
        )));
    }
    let gamma_bound =
        theory::gamma_bound(config.learning_rate, inputs.gap, inputs.sigma, inputs.zeta)?;
    let convergence_bound = theory::convergence_bound(&inputs)?;

    let problem_seed = config.problem_seed();
    let traces: Vec<_> = seeds
        .par_iter()
        .map(|&s| {
            let c = RunConfig {
                seed: s,
                problem_seed: Some(problem_seed),
                ..config.clone()
            };
            optim::run(&c).map(|out| out.trace)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = traces.len() as f64;
    let rounds = traces[0].rounds();
    let mean_gamma: Vec<(usize, f64)> = rounds
        .iter()
        .enumerate()
        .map(|(k, &t)| (t, traces.iter().map(|tr| tr.records[k].gamma).sum::<f64>() / n))
        .collect();
    let max_gamma_ratio = mean_gamma
        .iter()
        .map(|&(_, g)| ratio(g, gamma_bound))
        .fold(0.0, f64::max);
    let mean_final_excess_loss = traces
        .iter()
        .map(|tr| tr.last().map_or(0.0, |r| r.excess_loss))
        .sum::<f64>()
        / n;
    Ok(BoundReport {
        inputs,
        learning_rate: config.learning_rate,
        lr_threshold: threshold,
        gamma_bound,
        mean_gamma,
        max_gamma_ratio,
        mean_final_excess_loss,
        convergence_bound,
        excess_loss_ratio: ratio(mean_final_excess_loss, convergence_bound),
        seeds: seeds.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::InitialPoint;
    use crate::problem::ProblemParams;

    fn config() -> RunConfig {
        RunConfig {
            algorithm: Algorithm::Datsgd,
            schedule: WeightSchedule::Constant,
            learning_rate: 0.01,
            rounds: 40,
            topology: TopologySpec::Ring { machines: 4 },
            problem: ProblemParams {
                dimension: 4,
                machines: None,
                sigma: 1.0,
                zeta: 0.5,
                shared_design: false,
            },
            seed: 0,
            problem_seed: None,
            metric_stride: 10,
            initial_point: InitialPoint::Zero,
        }
    }

    #[test]
    fn single_seed_aggregate_equals_run() {
        let t = run_seeds(&config(), &[7]).unwrap();
        assert_eq!(t.rows.len(), 3);
        let run = &t.rows[0];
        let mean = t.aggregate(SeedLabel::Mean).next().unwrap();
        let std = t.aggregate(SeedLabel::Std).next().unwrap();
        assert_eq!(mean.final_error, run.final_error);
        assert_eq!(std.final_error, Some(0.0));
    }

    #[test]
    fn noiseless_runs_with_fixed_problem_are_seed_independent() {
        let mut c = config();
        c.problem.sigma = 0.0;
        c.problem_seed = Some(99);
        let t = run_seeds(&c, &[1, 2, 3]).unwrap();
        let errors: Vec<_> = t.seed_rows().map(|r| r.final_error.unwrap()).collect();
        assert!(errors.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(t.aggregate(SeedLabel::Std).next().unwrap().final_error, Some(0.0));
    }

    #[test]
    fn seed_order_does_not_matter() {
        let a = run_seeds(&config(), &[1, 2, 3]).unwrap();
        let b = run_seeds(&config(), &[3, 2, 1]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        assert!(run_seeds(&config(), &[]).is_err());
    }

    #[test]
    fn rows_regenerate_from_fingerprint() {
        let t = run_seeds(&config(), &[4, 5]).unwrap();
        for row in t.seed_rows() {
            let c = t.config_for(row).unwrap();
            let again = optim::run(c).unwrap();
            assert_eq!(Some(again.final_metrics.per_node_error), row.final_error);
        }
    }

    #[test]
    fn single_element_grid() {
        let r = grid_search(&config(), &[0.005], &[0]).unwrap();
        assert_eq!(r.best_eta, 0.005);
    }

    #[test]
    fn all_diverging_grid_errors() {
        let mut c = config();
        c.algorithm = Algorithm::Dsgd;
        c.rounds = 200;
        let err = grid_search(&c, &[50.0, 100.0], &[0]).unwrap_err();
        assert!(matches!(err, Error::NoStableLearningRate { .. }));
    }

    #[test]
    fn divergence_is_recorded_not_fatal() {
        let mut c = config();
        c.algorithm = Algorithm::Dsgd;
        c.rounds = 200;
        let r = grid_search(&c, &[0.001, 100.0], &[0, 1]).unwrap();
        assert_eq!(r.best_eta, 0.001);
        let bad: Vec<_> = r.table.seed_rows().filter(|x| x.eta == Some(100.0)).collect();
        assert!(bad.iter().all(|x| x.diverged && x.final_error.is_none()));
        let mean = r
            .table
            .aggregate(SeedLabel::Mean)
            .find(|x| x.eta == Some(100.0))
            .unwrap();
        assert!(mean.diverged && mean.final_error.is_none());
    }

    #[test]
    fn sweep_rejects_incompatible_machine_counts() {
        let spec = SweepSpec {
            base: config(),
            topologies: vec![TopologyKind::Torus],
            machines: vec![9, 8],
            algorithms: default_algorithms(),
            grid: vec![0.01],
            seeds: vec![0],
            budget: Budget::FixedRounds,
        };
        let msg = sweep_machines(&spec).unwrap_err().to_string();
        assert!(msg.contains("perfect-square"), "{msg}");
    }

    #[test]
    fn fixed_sample_budget_divides_rounds() {
        let spec = SweepSpec {
            base: config(),
            topologies: vec![TopologyKind::Ring],
            machines: vec![4, 8],
            algorithms: vec![Algorithm::Datsgd],
            grid: vec![0.01],
            seeds: vec![0],
            budget: Budget::FixedSamples { total_samples: 400 },
        };
        assert_eq!(spec.rounds_for(4), 100);
        assert_eq!(spec.rounds_for(8), 50);
        assert_eq!(spec.rounds_for(1000), 1);
    }

    #[test]
    fn bound_check_requires_small_rate() {
        let mut c = config();
        c.schedule = WeightSchedule::Linear;
        c.learning_rate = 1.0;
        let msg = bound_check(&c, &[0]).unwrap_err().to_string();
        assert!(msg.contains("threshold"), "{msg}");
        c.schedule = WeightSchedule::Constant;
        assert!(bound_check(&c, &[0]).is_err());
    }

    #[test]
    fn bound_check_noiseless_homogeneous_has_zero_ratio() {
        let mut c = config();
        c.schedule = WeightSchedule::Linear;
        c.problem.sigma = 0.0;
        c.problem.zeta = 0.0;
        c.problem.shared_design = true;
        c.rounds = 100;
        let inputs = theory_inputs_for(&c).unwrap();
        c.learning_rate = theory::gamma_bound_threshold(inputs.gap, inputs.smoothness);
        let report = bound_check(&c, &[0, 1]).unwrap();
        assert!(report.mean_gamma.iter().all(|&(_, g)| g == 0.0));
        assert_eq!(report.max_gamma_ratio, 0.0);
        assert!(report.excess_loss_ratio <= 1.0);
    }

    #[test]
    fn result_csv_columns() {
        let t = run_seeds(&config(), &[1, 2]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], RESULT_COLUMNS.join(","));
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("ring,datsgd,4,1,0.5,0.01,1,"));
        assert!(lines[3].contains(",mean,"));
        assert!(lines[4].contains(",std,"));
    }
}
