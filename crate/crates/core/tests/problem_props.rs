use datsgd::metrics::{consensus_distance, per_node_error};
use datsgd::problem::LeastSquaresProblem;
use datsgd::seed::NoiseStreams;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn point(d: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-3.0..3.0f64, d).prop_map(DVector::from_vec)
}

fn small_problem() -> impl Strategy<Value = LeastSquaresProblem> {
    (1usize..8, 1usize..6, 0.0..2.0f64, any::<bool>(), any::<u64>()).prop_map(
        |(d, m, zeta, shared, seed)| {
            LeastSquaresProblem::generate(d, m, 1.0, zeta, shared, seed).unwrap()
        },
    )
}

fn problem_and_points() -> impl Strategy<Value = (LeastSquaresProblem, DVector<f64>, DVector<f64>)>
{
    small_problem().prop_flat_map(|p| {
        let d = p.dimension();
        (Just(p), point(d), point(d))
    })
}

/// Largest eigenvalue of a PSD matrix by power iteration.
fn power_iteration(h: &DMatrix<f64>) -> f64 {
    let mut v = DVector::from_fn(h.nrows(), |i, _| 1.0 + 0.1 * i as f64);
    v.normalize_mut();
    for _ in 0..20_000 {
        let next = h * &v;
        let n = next.norm();
        if n == 0.0 {
            return 0.0;
        }
        v = next / n;
    }
    v.dot(&(h * &v))
}

proptest! {
    #[test]
    fn gradient_matches_central_differences((p, x, dir) in problem_and_points()) {
        let h = 1e-4;
        for i in 0..p.machines() {
            let g = p.exact_grad(i, &x).unwrap();
            let plus = p.local_loss(i, &(&x + &dir * h)).unwrap();
            let minus = p.local_loss(i, &(&x - &dir * h)).unwrap();
            let fd = (plus - minus) / (2.0 * h);
            let tol = 1e-6 * (1.0 + plus.abs() + minus.abs());
            prop_assert!((fd - g.dot(&dir)).abs() <= tol, "fd {fd} vs {}", g.dot(&dir));
        }
    }

    #[test]
    fn convexity_and_smoothness_witnesses((p, x, y) in problem_and_points()) {
        let fx = p.loss(&x).unwrap();
        let fy = p.loss(&y).unwrap();
        let g = p.global_grad(&x).unwrap();
        let lin = fx + g.dot(&(&y - &x));
        let quad = lin + 0.5 * p.smoothness() * (&y - &x).norm_squared();
        let tol = 1e-9 * (1.0 + fx.abs() + fy.abs());
        prop_assert!(fy >= lin - tol);
        prop_assert!(fy <= quad + tol);
    }

    #[test]
    fn optimum_is_global_minimizer((p, x, _y) in problem_and_points()) {
        let opt = match p.optimum() {
            Ok(o) => o,
            // nearly singular random draws are allowed to refuse
            Err(_) => return Ok(()),
        };
        prop_assert!(p.global_grad(&opt.point).unwrap().norm() <= 1e-8 * (1.0 + opt.point.norm()));
        prop_assert!(p.loss(&x).unwrap() >= opt.loss - 1e-10);
    }

    #[test]
    fn per_node_error_splits_into_consensus_and_bias(
        cols in prop::collection::vec(point(4), 1..8),
        target in point(4),
    ) {
        let y = DMatrix::from_columns(&cols);
        let lhs = per_node_error(&y, &target);
        let rhs = consensus_distance(&y) + (y.column_mean() - &target).norm_squared();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs));
    }
}

#[test]
fn smoothness_matches_power_iteration() {
    for seed in 0..5 {
        for shared in [false, true] {
            let p = LeastSquaresProblem::generate(10, 4, 1.0, 1.0, shared, seed).unwrap();
            let oracle = (0..p.machines())
                .map(|i| power_iteration(&(p.design(i).transpose() * p.design(i))))
                .fold(0.0, f64::max);
            let l = p.smoothness();
            assert!((l - oracle).abs() <= 1e-6 * l, "seed {seed}: {l} vs {oracle}");
        }
    }
}

fn noise_samples(p: &LeastSquaresProblem, draws: usize) -> Vec<DVector<f64>> {
    let x = DVector::zeros(p.dimension());
    let exact = p.exact_grad(0, &x).unwrap();
    let streams = NoiseStreams::new(99);
    (1..=draws)
        .map(|t| {
            let mut rng = streams.stream(0, t);
            p.stoch_grad(0, &x, t, &mut rng).unwrap().value - &exact
        })
        .collect()
}

#[test]
fn gradient_noise_is_centered_with_variance_sigma_squared() {
    let d = 50;
    let p = LeastSquaresProblem::generate(d, 1, 1.0, 0.0, false, 3).unwrap();
    let draws = 100_000;
    let samples = noise_samples(&p, draws);
    let mean = samples.iter().fold(DVector::zeros(d), |acc, s| acc + s) / draws as f64;
    // each coordinate mean has standard deviation 1 / sqrt(d * draws)
    let coord_sd = 1.0 / ((d * draws) as f64).sqrt();
    assert!(mean.amax() <= 5.0 * coord_sd, "mean {}", mean.amax());
    let second: f64 = samples.iter().map(|s| s.norm_squared()).sum::<f64>() / draws as f64;
    assert!((second - 1.0).abs() <= 0.01, "E|xi|^2 = {second}");
}

#[test]
fn scalar_noise_variance() {
    let p = LeastSquaresProblem::from_parts(
        vec![DMatrix::from_element(1, 1, 1.0)],
        vec![DVector::from_element(1, 0.0)],
        2.0,
    )
    .unwrap();
    let draws = 100_000;
    let samples: Vec<f64> = noise_samples(&p, draws).iter().map(|s| s[0]).collect();
    let mean = samples.iter().sum::<f64>() / draws as f64;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
    assert!((var - 4.0).abs() <= 0.2, "variance {var}");
}

#[test]
fn streams_reproduce_draws() {
    let p = LeastSquaresProblem::generate(5, 2, 1.0, 0.5, false, 11).unwrap();
    let x = DVector::from_element(5, 0.25);
    let streams = NoiseStreams::new(7);
    let a = p.stoch_grad(1, &x, 3, &mut streams.stream(1, 3)).unwrap();
    let b = p.stoch_grad(1, &x, 3, &mut streams.stream(1, 3)).unwrap();
    let c = p.stoch_grad(1, &x, 4, &mut streams.stream(1, 4)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.value, c.value);
}
