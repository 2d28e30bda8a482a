use datsgd::optim::{
    self, datsgd_round, dsgd_round, weight_coeffs, Algorithm, InitialPoint, NetworkState,
    RunConfig, WeightSchedule,
};
use datsgd::problem::{LeastSquaresProblem, ProblemParams};
use datsgd::seed::NoiseStreams;
use datsgd::topology::{self, TopologySpec};
use nalgebra::DVector;
use proptest::prelude::*;

fn schedule() -> impl Strategy<Value = WeightSchedule> {
    prop_oneof![
        Just(WeightSchedule::Constant),
        Just(WeightSchedule::Linear),
        (0.05..0.95f64).prop_map(|gamma| WeightSchedule::FixedGamma { gamma }),
    ]
}

fn topology_spec() -> impl Strategy<Value = TopologySpec> {
    prop_oneof![
        (3usize..10).prop_map(|m| TopologySpec::Ring { machines: m }),
        (1usize..6).prop_map(|m| TopologySpec::Complete { machines: m }),
        (1u32..4).prop_map(|k| TopologySpec::OnePeerExp { machines: 1 << k }),
        Just(TopologySpec::Torus { rows: 3, cols: 3 }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn consensus_means_follow_centralized_recursions(
        spec in topology_spec(),
        sched in schedule(),
        seed in any::<u64>(),
        d in 1usize..6,
    ) {
        let seq = topology::build(&spec).unwrap();
        let m = seq.machines();
        let problem = LeastSquaresProblem::generate(d, m, 1.0, 1.0, false, seed).unwrap();
        let eta = 0.01 / (problem.smoothness() * 50.0);
        let noise = NoiseStreams::new(seed ^ 1);
        let w1 = DVector::from_element(d, 0.5);
        let mut state = NetworkState::new(Algorithm::Datsgd, &w1, m);
        for t in 1..=50 {
            let c = weight_coeffs(sched, t).unwrap();
            let w_prev = state.w.column_mean();
            let x_prev = state.x.as_ref().unwrap().column_mean();
            let g = datsgd_round(&mut state, seq.at(t), &problem, eta, sched, &noise).unwrap();
            let w_bar = state.w.column_mean();
            let x_bar = state.x.as_ref().unwrap().column_mean();
            let want_w = &w_prev - g.column_mean() * (eta * c.step_scale());
            let want_x = &x_prev * c.keep + &w_bar * c.delta;
            let scale = 1.0 + w_bar.amax() + x_bar.amax();
            prop_assert!((&w_bar - want_w).amax() <= 1e-12 * scale);
            prop_assert!((&x_bar - want_x).amax() <= 1e-12 * scale);
        }
        prop_assert_eq!(state.round, 51);
    }

    #[test]
    fn dsgd_mean_takes_averaged_gradient_steps(spec in topology_spec(), seed in any::<u64>()) {
        let seq = topology::build(&spec).unwrap();
        let m = seq.machines();
        let problem = LeastSquaresProblem::generate(3, m, 1.0, 1.0, false, seed).unwrap();
        let eta = 0.5 / problem.smoothness();
        let noise = NoiseStreams::new(seed);
        let mut state = NetworkState::new(Algorithm::Dsgd, &DVector::zeros(3), m);
        for t in 1..=30 {
            let before = state.w.column_mean();
            let g = dsgd_round(&mut state, seq.at(t), &problem, eta, &noise).unwrap();
            let want = before - g.column_mean() * eta;
            prop_assert!((state.w.column_mean() - want).amax() <= 1e-12 * (1.0 + state.w.amax()));
        }
    }
}

#[test]
fn single_machine_dsgd_is_plain_sgd_bitwise() {
    let problem = LeastSquaresProblem::generate(6, 1, 1.0, 0.0, false, 21).unwrap();
    let seq = topology::build(&TopologySpec::Complete { machines: 1 }).unwrap();
    let noise = NoiseStreams::new(22);
    let eta = 0.5 / problem.smoothness();
    let mut state = NetworkState::new(Algorithm::Dsgd, &DVector::zeros(6), 1);
    let mut w = DVector::zeros(6);
    for t in 1..=500 {
        let g = problem.stoch_grad(0, &w, t, &mut noise.stream(0, t)).unwrap().value;
        w = &w - &g * eta;
        dsgd_round(&mut state, seq.at(t), &problem, eta, &noise).unwrap();
        assert_eq!(state.w.column(0), w.column(0), "round {t}");
    }
}

fn config() -> RunConfig {
    RunConfig {
        algorithm: Algorithm::Datsgd,
        schedule: WeightSchedule::Linear,
        learning_rate: 0.002,
        rounds: 300,
        topology: TopologySpec::Ring { machines: 6 },
        problem: ProblemParams {
            dimension: 8,
            machines: None,
            sigma: 1.0,
            zeta: 1.0,
            shared_design: false,
        },
        seed: 5,
        problem_seed: None,
        metric_stride: 25,
        initial_point: InitialPoint::Zero,
    }
}

#[test]
fn traces_are_well_formed_for_both_algorithms() {
    for algorithm in [Algorithm::Dsgd, Algorithm::Datsgd] {
        let out = optim::run(&RunConfig {
            algorithm,
            ..config()
        })
        .unwrap();
        assert!(out.trace.is_well_formed(out.reference.min_loss()));
        let rounds = out.trace.rounds();
        assert_eq!(rounds.first(), Some(&1));
        assert_eq!(rounds.last(), Some(&300));
        assert!(rounds.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn rerun_writes_identical_trace_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    optim::run(&config()).unwrap().trace.write_csv_path(&a).unwrap();
    optim::run(&config()).unwrap().trace.write_csv_path(&b).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn config_round_trips_through_json() {
    let c = config();
    let back = RunConfig::from_json_str(&c.to_json()).unwrap();
    assert_eq!(back, c);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let mut value: serde_json::Value = serde_json::from_str(&config().to_json()).unwrap();
    value["problem"]["sigmaa"] = serde_json::json!(1.0);
    let err = RunConfig::from_json_str(&value.to_string()).unwrap_err().to_string();
    assert!(err.contains("problem"), "{err}");
    assert!(err.contains("sigmaa"), "{err}");
}
