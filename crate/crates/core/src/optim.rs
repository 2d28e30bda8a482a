//! D-SGD and Decentralized Anytime SGD (DAT-SGD).
//!
//! Both algorithms keep a `d x M` matrix of local iterates `W`. A round is a
//! local stochastic-gradient step followed by one gossip step.
//!
//! D-SGD queries gradients at the iterates:
//!
//! ```text
//! g_i     = grad f_i(w_i) + noise
//! W_{t+1} = (W_t - eta G_t) P
//! ```
//!
//! DAT-SGD additionally keeps query points `X`, a running weighted average
//! of the iterates, and queries gradients there:
//!
//! ```text
//! g_i        = grad f_i(x_i) + noise
//! W_{t+1/2}  = W_t - eta alpha_t G_t
//! X_{t+1/2}  = (alpha_{1:t-1} / alpha_{1:t}) X_t + (alpha_t / alpha_{1:t}) W_{t+1/2}
//! W_{t+1}    = W_{t+1/2} P,   X_{t+1} = X_{t+1/2} P
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::metrics::{self, MetricsTrace, Reference, TraceRecord};
use crate::problem::{LeastSquaresProblem, ProblemParams};
use crate::seed::NoiseStreams;
use crate::topology::{self, GossipMatrix, GossipSequence, TopologySpec};

/// Entries beyond this magnitude count as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Dsgd,
    Datsgd,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Dsgd => "dsgd",
            Algorithm::Datsgd => "datsgd",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Averaging weights of the query-point sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSchedule {
    /// `alpha_t = 1`: uniform averaging.
    Constant,
    /// `alpha_t = t`.
    #[default]
    Linear,
    /// `x <- gamma x + (1 - gamma) w` with an unweighted gradient step.
    FixedGamma { gamma: f64 },
}

impl WeightSchedule {
    pub fn check(&self) -> Result<()> {
        if let WeightSchedule::FixedGamma { gamma } = self {
            if !(*gamma > 0.0 && *gamma < 1.0) {
                return Err(param(format!("fixed_gamma requires gamma in (0, 1), got {gamma}")));
            }
        }
        Ok(())
    }
}

/// Coefficients of round `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightCoeffs {
    /// `alpha_t`; `None` for [`WeightSchedule::FixedGamma`].
    pub alpha: Option<f64>,
    /// `alpha_{1:t}`; `None` for [`WeightSchedule::FixedGamma`].
    pub cumulative: Option<f64>,
    /// Weight of the fresh iterate, `delta_t = alpha_t / alpha_{1:t}`.
    pub delta: f64,
    /// Weight of the previous query point, `alpha_{1:t-1} / alpha_{1:t}`.
    pub keep: f64,
}

impl WeightCoeffs {
    /// Multiplier of `eta` in the iterate step.
    pub fn step_scale(&self) -> f64 {
        self.alpha.unwrap_or(1.0)
    }
}

pub fn weight_coeffs(schedule: WeightSchedule, t: usize) -> Result<WeightCoeffs> {
    if t < 1 {
        return Err(param("rounds are 1-based: t must be >= 1"));
    }
    let tf = t as f64;
    let (alpha, cumulative, previous) = match schedule {
        WeightSchedule::Constant => (1.0, tf, tf - 1.0),
        WeightSchedule::Linear => (tf, tf * (tf + 1.0) / 2.0, (tf - 1.0) * tf / 2.0),
        WeightSchedule::FixedGamma { gamma } => {
            schedule.check()?;
            return Ok(WeightCoeffs {
                alpha: None,
                cumulative: None,
                delta: 1.0 - gamma,
                keep: gamma,
            });
        }
    };
    Ok(WeightCoeffs {
        alpha: Some(alpha),
        cumulative: Some(cumulative),
        delta: alpha / cumulative,
        keep: previous / cumulative,
    })
}

/// Local iterates, optional query points and the round counter.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub w: DMatrix<f64>,
    /// Query points; `None` for D-SGD.
    pub x: Option<DMatrix<f64>>,
    /// Index of the next round to execute (starts at 1).
    pub round: usize,
    /// `alpha_{1:t-1}` of the active schedule.
    pub cumulative_weight: f64,
}

impl NetworkState {
    /// Every machine starts at `initial`.
    pub fn new(algorithm: Algorithm, initial: &DVector<f64>, machines: usize) -> Self {
        let w = DMatrix::from_fn(initial.len(), machines, |r, _| initial[r]);
        let x = match algorithm {
            Algorithm::Dsgd => None,
            Algorithm::Datsgd => Some(w.clone()),
        };
        NetworkState {
            w,
            x,
            round: 1,
            cumulative_weight: 0.0,
        }
    }

    /// Points where gradients are queried: `X` for DAT-SGD, `W` for D-SGD.
    pub fn query_points(&self) -> &DMatrix<f64> {
        self.x.as_ref().unwrap_or(&self.w)
    }

    /// The algorithm's output variable (same as [`Self::query_points`]).
    pub fn output(&self) -> &DMatrix<f64> {
        self.query_points()
    }

    fn check_shapes(&self, p: &GossipMatrix, problem: &LeastSquaresProblem) -> Result<()> {
        let (d, m) = self.w.shape();
        if d != problem.dimension() || m != problem.machines() || m != p.size() {
            return Err(Error::Shape {
                context: "network state",
                expected: format!(
                    "{}x{} iterates for a {}-machine gossip matrix",
                    problem.dimension(),
                    problem.machines(),
                    p.size()
                ),
                found: format!("{d}x{m} iterates"),
            });
        }
        if let Some(x) = &self.x {
            if x.shape() != (d, m) {
                return Err(Error::Shape {
                    context: "network state",
                    expected: format!("{d}x{m} query points"),
                    found: format!("{}x{} query points", x.nrows(), x.ncols()),
                });
            }
        }
        Ok(())
    }

    fn check_finite(&self, round: usize) -> Result<()> {
        let sane = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite() && v.abs() <= DIVERGENCE_LIMIT);
        if !sane(&self.w) || !self.x.as_ref().map_or(true, sane) {
            return Err(Error::Divergence { round });
        }
        Ok(())
    }
}

/// Samples one stochastic gradient per column of `points` for round `t`.
pub fn sample_gradients(
    problem: &LeastSquaresProblem,
    points: &DMatrix<f64>,
    t: usize,
    noise: &NoiseStreams,
) -> DMatrix<f64> {
    let (d, m) = points.shape();
    let mut g = DMatrix::zeros(d, m);
    let mut residual = DVector::zeros(d);
    let mut out = DVector::zeros(d);
    for i in 0..m {
        problem.grad_into(i, points.column(i), &mut residual, &mut out);
        if problem.noise_std() > 0.0 {
            let mut rng = noise.stream(i, t);
            problem.add_noise(&mut out, &mut rng);
        }
        g.set_column(i, &out);
    }
    g
}

/// One D-SGD round. Returns the sampled gradient matrix.
pub fn dsgd_round(
    state: &mut NetworkState,
    p: &GossipMatrix,
    problem: &LeastSquaresProblem,
    learning_rate: f64,
    noise: &NoiseStreams,
) -> Result<DMatrix<f64>> {
    if state.x.is_some() {
        return Err(param("dsgd_round expects a state without query points"));
    }
    state.check_shapes(p, problem)?;
    let t = state.round;
    let g = sample_gradients(problem, &state.w, t, noise);
    let half = &state.w - &g * learning_rate;
    state.w = topology::gossip_step(&half, p)?;
    state.round += 1;
    state.cumulative_weight += 1.0;
    state.check_finite(t)?;
    Ok(g)
}

/// One DAT-SGD round. Returns the sampled gradient matrix.
pub fn datsgd_round(
    state: &mut NetworkState,
    p: &GossipMatrix,
    problem: &LeastSquaresProblem,
    learning_rate: f64,
    schedule: WeightSchedule,
    noise: &NoiseStreams,
) -> Result<DMatrix<f64>> {
    state.check_shapes(p, problem)?;
    let t = state.round;
    let coeffs = weight_coeffs(schedule, t)?;
    let x = state
        .x
        .as_ref()
        .ok_or_else(|| param("datsgd_round expects a state with query points"))?;
    let g = sample_gradients(problem, x, t, noise);
    let w_half = &state.w - &g * (learning_rate * coeffs.step_scale());
    let x_half = x * coeffs.keep + &w_half * coeffs.delta;
    state.w = topology::gossip_step(&w_half, p)?;
    state.x = Some(topology::gossip_step(&x_half, p)?);
    state.round += 1;
    state.cumulative_weight = coeffs.cumulative.unwrap_or(state.cumulative_weight + 1.0);
    state.check_finite(t)?;
    Ok(g)
}

/// Shared starting point `w_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialPoint {
    #[default]
    Zero,
    Point {
        values: Vec<f64>,
    },
}

impl InitialPoint {
    pub fn resolve(&self, dimension: usize) -> Result<DVector<f64>> {
        match self {
            InitialPoint::Zero => Ok(DVector::zeros(dimension)),
            InitialPoint::Point { values } => {
                if values.len() != dimension {
                    return Err(param(format!(
                        "initial_point has {} values, problem dimension is {dimension}",
                        values.len()
                    )));
                }
                Ok(DVector::from_column_slice(values))
            }
        }
    }
}

fn default_stride() -> usize {
    10
}

/// Everything needed to reproduce one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    #[serde(default)]
    pub schedule: WeightSchedule,
    pub learning_rate: f64,
    pub rounds: usize,
    pub topology: TopologySpec,
    pub problem: ProblemParams,
    #[serde(default)]
    pub seed: u64,
    /// Seed of the problem instance; defaults to `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_seed: Option<u64>,
    #[serde(default = "default_stride")]
    pub metric_stride: usize,
    #[serde(default)]
    pub initial_point: InitialPoint,
}

impl RunConfig {
    /// Parses a JSON config, reporting the offending field path on error.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner()))
        })?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("RunConfig serializes")
    }

    pub fn problem_seed(&self) -> u64 {
        self.problem_seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(param(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.rounds < 1 {
            return Err(param("rounds must be >= 1"));
        }
        if self.metric_stride < 1 {
            return Err(param("metric_stride must be >= 1"));
        }
        self.schedule.check()?;
        self.topology.check()?;
        if let Some(m) = self.problem.machines {
            if m != self.topology.machines() {
                return Err(param(format!(
                    "problem machines ({m}) does not match topology machines ({})",
                    self.topology.machines()
                )));
            }
        }
        if self.problem.dimension == 0 {
            return Err(param("problem dimension must be positive"));
        }
        self.initial_point.resolve(self.problem.dimension)?;
        Ok(())
    }
}

/// Error measures of the final state, after all rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    /// `f(xbar) - f*` of the output variable's consensus mean.
    pub excess_loss: f64,
    /// `(1/M) sum_i ||x_i - x*||^2` of the output variable.
    pub per_node_error: f64,
    pub consensus_distance: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: MetricsTrace,
    pub state: NetworkState,
    pub final_metrics: FinalMetrics,
    pub smoothness: f64,
    pub reference: Reference,
}

/// Whether round `t` of a `rounds`-round run is recorded.
pub fn is_recorded(t: usize, rounds: usize, stride: usize) -> bool {
    t == 1 || t == rounds || t % stride == 0
}

/// Builds the topology and problem from `config` and runs it.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let seq = topology::build(&config.topology)?;
    let problem =
        LeastSquaresProblem::from_params(&config.problem, seq.machines(), config.problem_seed())?;
    run_on(config, &seq, &problem)
}

/// Runs `config` on an already-built topology and problem.
pub fn run_on(
    config: &RunConfig,
    seq: &GossipSequence,
    problem: &LeastSquaresProblem,
) -> Result<RunOutput> {
    config.validate()?;
    if seq.machines() != problem.machines() {
        return Err(param(format!(
            "topology has {} machines, problem has {}",
            seq.machines(),
            problem.machines()
        )));
    }
    let reference = Reference::new(problem)?;
    let initial = config.initial_point.resolve(problem.dimension())?;
    let mut state = NetworkState::new(config.algorithm, &initial, problem.machines());
    let noise = NoiseStreams::new(config.seed);
    let mut trace = MetricsTrace::default();

    for t in 1..=config.rounds {
        let pending = is_recorded(t, config.rounds, config.metric_stride)
            .then(|| snapshot(&state, problem, &reference, t));
        let p = seq.at(t);
        let g = match config.algorithm {
            Algorithm::Dsgd => dsgd_round(&mut state, p, problem, config.learning_rate, &noise)?,
            Algorithm::Datsgd => datsgd_round(
                &mut state,
                p,
                problem,
                config.learning_rate,
                config.schedule,
                &noise,
            )?,
        };
        if let Some(mut record) = pending {
            record.psi = metrics::gradient_consensus(&g);
            trace.records.push(record);
        }
    }

    let output = state.output();
    let mean = output.column_mean();
    let final_metrics = FinalMetrics {
        excess_loss: metrics::excess_loss(&reference, &mean),
        per_node_error: metrics::per_node_error(output, reference.x_star()),
        consensus_distance: metrics::consensus_distance(output),
    };
    Ok(RunOutput {
        trace,
        state,
        final_metrics,
        smoothness: problem.smoothness(),
        reference,
    })
}

/// Metrics of the state at the start of round `t`; `psi` is filled in later.
fn snapshot(
    state: &NetworkState,
    problem: &LeastSquaresProblem,
    reference: &Reference,
    t: usize,
) -> TraceRecord {
    let x = state.query_points();
    let x_mean = x.column_mean();
    let x_star = reference.x_star();
    TraceRecord {
        round: t,
        gamma: metrics::consensus_distance(x),
        xi: metrics::consensus_distance(&state.w),
        psi: 0.0,
        loss_consensus: problem.loss_unchecked(x_mean.as_view()),
        excess_loss: metrics::excess_loss(reference, &x_mean),
        per_node_error_x: metrics::per_node_error(x, x_star),
        per_node_error_w: metrics::per_node_error(&state.w, x_star),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_problem(a: &[f64], b: &[f64]) -> LeastSquaresProblem {
        LeastSquaresProblem::from_parts(
            a.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect(),
            b.iter().map(|&v| DVector::from_element(1, v)).collect(),
            0.0,
        )
        .unwrap()
    }

    fn complete(m: usize) -> GossipMatrix {
        topology::build(&TopologySpec::Complete { machines: m })
            .unwrap()
            .at(1)
            .clone()
    }

    #[test]
    fn weight_coeff_examples() {
        let c = weight_coeffs(WeightSchedule::Linear, 1).unwrap();
        assert_eq!((c.alpha, c.cumulative, c.delta), (Some(1.0), Some(1.0), 1.0));
        let c = weight_coeffs(WeightSchedule::Linear, 3).unwrap();
        assert_eq!((c.alpha, c.cumulative, c.delta), (Some(3.0), Some(6.0), 0.5));
        let c = weight_coeffs(WeightSchedule::Constant, 4).unwrap();
        assert_eq!((c.alpha, c.cumulative, c.delta), (Some(1.0), Some(4.0), 0.25));
        for t in [1, 7, 100] {
            let c = weight_coeffs(WeightSchedule::FixedGamma { gamma: 0.9 }, t).unwrap();
            assert_eq!(c.alpha, None);
            assert_abs_diff_eq!(c.delta, 0.1, epsilon = 1e-15);
        }
        assert!(weight_coeffs(WeightSchedule::Linear, 0).is_err());
        assert!(weight_coeffs(WeightSchedule::FixedGamma { gamma: 1.0 }, 1).is_err());
    }

    #[test]
    fn linear_delta_matches_closed_form() {
        for t in 1..200 {
            let c = weight_coeffs(WeightSchedule::Linear, t).unwrap();
            assert_abs_diff_eq!(c.delta, 2.0 / (t as f64 + 1.0), epsilon = 1e-15);
            assert_abs_diff_eq!(c.keep + c.delta, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn dsgd_hand_computed_round() {
        // A_i = 1, b_i = 0: grad = w. Local [0.5, 1.5], gossip -> [1, 1].
        let problem = scalar_problem(&[1.0, 1.0], &[0.0, 0.0]);
        let mut state = NetworkState::new(Algorithm::Dsgd, &DVector::zeros(1), 2);
        state.w = DMatrix::from_row_slice(1, 2, &[1.0, 3.0]);
        dsgd_round(&mut state, &complete(2), &problem, 0.5, &NoiseStreams::new(0)).unwrap();
        assert_eq!(state.w.as_slice(), &[1.0, 1.0]);
        assert_eq!(state.round, 2);
    }

    #[test]
    fn dsgd_optimum_is_fixed_point() {
        let problem = LeastSquaresProblem::generate(3, 4, 0.0, 0.0, true, 1).unwrap();
        let x_star = problem.planted().unwrap().clone();
        let ring = topology::build(&TopologySpec::Ring { machines: 4 }).unwrap();
        let mut state = NetworkState::new(Algorithm::Dsgd, &x_star, 4);
        let before = state.w.clone();
        dsgd_round(&mut state, ring.at(1), &problem, 0.1, &NoiseStreams::new(3)).unwrap();
        assert!((&state.w - before).amax() < 1e-14);
    }

    #[test]
    fn datsgd_hand_computed_first_round() {
        // f(w) = w^2 / 2, w1 = x1 = 1, eta = 0.1: g = 1, w2 = 0.9, x2 = 0.9.
        let problem = scalar_problem(&[1.0], &[0.0]);
        let mut state = NetworkState::new(Algorithm::Datsgd, &DVector::from_element(1, 1.0), 1);
        let g = datsgd_round(
            &mut state,
            &complete(1),
            &problem,
            0.1,
            WeightSchedule::Linear,
            &NoiseStreams::new(0),
        )
        .unwrap();
        assert_eq!(g[(0, 0)], 1.0);
        assert_abs_diff_eq!(state.w[(0, 0)], 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(state.x.as_ref().unwrap()[(0, 0)], 0.9, epsilon = 1e-15);
        assert_eq!(state.cumulative_weight, 1.0);
    }

    #[test]
    fn datsgd_complete_graph_reaches_consensus() {
        let problem = LeastSquaresProblem::generate(4, 5, 1.0, 1.0, false, 2).unwrap();
        let p = complete(5);
        let mut state = NetworkState::new(Algorithm::Datsgd, &DVector::zeros(4), 5);
        let noise = NoiseStreams::new(9);
        for _ in 0..3 {
            datsgd_round(&mut state, &p, &problem, 0.01, WeightSchedule::Linear, &noise).unwrap();
            assert!(metrics::consensus_distance(&state.w) < 1e-24);
            assert!(metrics::consensus_distance(state.x.as_ref().unwrap()) < 1e-24);
        }
    }

    #[test]
    fn datsgd_optimum_is_fixed_point() {
        let problem = LeastSquaresProblem::generate(3, 4, 0.0, 0.0, true, 4).unwrap();
        let x_star = problem.planted().unwrap().clone();
        let ring = topology::build(&TopologySpec::Ring { machines: 4 }).unwrap();
        let mut state = NetworkState::new(Algorithm::Datsgd, &x_star, 4);
        let before = state.clone();
        for _ in 0..5 {
            datsgd_round(
                &mut state,
                ring.at(1),
                &problem,
                0.05,
                WeightSchedule::Linear,
                &NoiseStreams::new(1),
            )
            .unwrap();
        }
        assert!((&state.w - &before.w).amax() < 1e-14);
        assert!((state.x.as_ref().unwrap() - before.x.as_ref().unwrap()).amax() < 1e-14);
    }

    #[test]
    fn round_functions_check_state_kind_and_shape() {
        let problem = scalar_problem(&[1.0, 1.0], &[0.0, 0.0]);
        let noise = NoiseStreams::new(0);
        let mut dat = NetworkState::new(Algorithm::Datsgd, &DVector::zeros(1), 2);
        assert!(dsgd_round(&mut dat, &complete(2), &problem, 0.1, &noise).is_err());
        let mut ds = NetworkState::new(Algorithm::Dsgd, &DVector::zeros(1), 2);
        assert!(datsgd_round(&mut ds, &complete(2), &problem, 0.1, WeightSchedule::Linear, &noise)
            .is_err());
        let mut wrong = NetworkState::new(Algorithm::Dsgd, &DVector::zeros(1), 3);
        assert!(matches!(
            dsgd_round(&mut wrong, &complete(3), &problem, 0.1, &noise),
            Err(Error::Shape { .. })
        ));
    }

    fn base_config() -> RunConfig {
        RunConfig {
            algorithm: Algorithm::Datsgd,
            schedule: WeightSchedule::Linear,
            learning_rate: 0.01,
            rounds: 1,
            topology: TopologySpec::Ring { machines: 4 },
            problem: ProblemParams {
                dimension: 3,
                machines: None,
                sigma: 1.0,
                zeta: 0.5,
                shared_design: false,
            },
            seed: 5,
            problem_seed: None,
            metric_stride: 10,
            initial_point: InitialPoint::Zero,
        }
    }

    #[test]
    fn single_round_run_records_round_one() {
        let out = run(&base_config()).unwrap();
        assert_eq!(out.trace.rounds(), vec![1]);
        assert_eq!(out.state.round, 2);
    }

    #[test]
    fn recorded_rounds_follow_stride() {
        let mut config = base_config();
        config.rounds = 25;
        let out = run(&config).unwrap();
        assert_eq!(out.trace.rounds(), vec![1, 10, 20, 25]);
        assert!(out.trace.is_well_formed(out.reference.min_loss()));
    }

    #[test]
    fn run_is_deterministic() {
        let mut config = base_config();
        config.rounds = 50;
        let a = run(&config).unwrap();
        let b = run(&config).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.state, b.state);
    }

    #[test]
    fn large_step_diverges() {
        let mut config = base_config();
        config.algorithm = Algorithm::Dsgd;
        config.problem.sigma = 0.0;
        config.problem.zeta = 0.0;
        config.problem.shared_design = true;
        config.rounds = 10_000;
        let problem = LeastSquaresProblem::generate(3, 4, 0.0, 0.0, true, config.seed).unwrap();
        config.learning_rate = 3.0 / problem.smoothness();
        config.initial_point = InitialPoint::Point {
            values: vec![1.0, -1.0, 0.5],
        };
        match run(&config) {
            Err(Error::Divergence { round }) => assert!(round < 10_000),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let mut c = base_config();
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        let mut c = base_config();
        c.problem.machines = Some(5);
        assert!(c.validate().unwrap_err().to_string().contains("does not match"));
        let mut c = base_config();
        c.rounds = 0;
        assert!(c.validate().is_err());
        let mut c = base_config();
        c.initial_point = InitialPoint::Point { values: vec![1.0] };
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_names_bad_field() {
        let text = r#"{
            "algorithm": "dat_sgd",
            "learning_rate": 0.01,
            "rounds": 10,
            "topology": {"kind": "ring", "machines": 4},
            "problem": {"dimension": 3, "sigma": 1.0, "zeta": 0.0}
        }"#;
        let msg = RunConfig::from_json_str(text).unwrap_err().to_string();
        assert!(msg.contains("algorithm"), "{msg}");
        assert!(msg.contains("dsgd") && msg.contains("datsgd"), "{msg}");

        let unknown = text.replace("\"dat_sgd\"", "\"dsgd\", \"colour\": 1");
        let msg = RunConfig::from_json_str(&unknown).unwrap_err().to_string();
        assert!(msg.contains("colour"), "{msg}");

        let ok = text.replace("dat_sgd", "datsgd");
        let config = RunConfig::from_json_str(&ok).unwrap();
        assert_eq!(config.schedule, WeightSchedule::Linear);
        assert_eq!(config.metric_stride, 10);
        let round_trip = RunConfig::from_json_str(&config.to_json()).unwrap();
        assert_eq!(round_trip, config);
    }
}
