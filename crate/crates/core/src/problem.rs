//! Synthetic distributed least-squares objective.
//!
//! Machine `i` holds `f_i(x) = 1/2 ||A_i x - b_i||^2` with `A_i` a `d x d`
//! standard Gaussian matrix and `b_i = A_i (x_sharp - delta_i)`, where
//! `x_sharp ~ N(0, I/d)` is shared and `delta_i ~ N(0, zeta^2/d I)` perturbs
//! each machine's optimum. Stochastic gradients add `N(0, sigma^2/d I)` noise.
//! The global objective is `f(x) = (1/M) sum_i f_i(x)`.

use nalgebra::{DMatrix, DVector, DVectorView, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::seed::{derive_seed, tag};

/// Largest acceptable condition number of the normal matrix.
const MAX_CONDITION: f64 = 1e12;

/// Knobs of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemParams {
    pub dimension: usize,
    /// Optional; when given it must match the topology's machine count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub machines: Option<usize>,
    pub sigma: f64,
    pub zeta: f64,
    #[serde(default)]
    pub shared_design: bool,
}

#[derive(Debug, Clone)]
pub struct LeastSquaresProblem {
    dimension: usize,
    designs: Vec<DMatrix<f64>>,
    targets: Vec<DVector<f64>>,
    planted: Option<DVector<f64>>,
    noise_std: f64,
    heterogeneity: f64,
    shared_design: bool,
    smoothness: f64,
}

/// A stochastic gradient drawn at some point.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub value: DVector<f64>,
    pub machine: usize,
    pub round: usize,
}

/// Global minimizer and minimal loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub point: DVector<f64>,
    pub loss: f64,
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn max_eigenvalue_of_gram(a: &DMatrix<f64>) -> f64 {
    let gram = a.transpose() * a;
    SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

impl LeastSquaresProblem {
    /// Draws a problem instance. Deterministic in `seed`.
    pub fn generate(
        dimension: usize,
        machines: usize,
        sigma: f64,
        zeta: f64,
        shared_design: bool,
        seed: u64,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(param("dimension must be positive"));
        }
        if machines == 0 {
            return Err(param("machine count must be positive"));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(param(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        if !(zeta >= 0.0 && zeta.is_finite()) {
            return Err(param(format!("zeta must be finite and >= 0, got {zeta}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[tag::PROBLEM, seed]));
        let d = dimension;
        let designs: Vec<DMatrix<f64>> = if shared_design {
            let a = gaussian_matrix(&mut rng, d, d, 1.0);
            vec![a; machines]
        } else {
            (0..machines)
                .map(|_| gaussian_matrix(&mut rng, d, d, 1.0))
                .collect()
        };
        let scale = 1.0 / (d as f64).sqrt();
        let planted = gaussian_vector(&mut rng, d, scale);
        let targets = designs
            .iter()
            .map(|a| {
                let delta = gaussian_vector(&mut rng, d, zeta * scale);
                a * (&planted - delta)
            })
            .collect();
        let smoothness = if shared_design {
            max_eigenvalue_of_gram(&designs[0])
        } else {
            designs.iter().map(max_eigenvalue_of_gram).fold(0.0, f64::max)
        };
        Ok(LeastSquaresProblem {
            dimension: d,
            designs,
            targets,
            planted: Some(planted),
            noise_std: sigma,
            heterogeneity: zeta,
            shared_design,
            smoothness,
        })
    }

    /// Generates from [`ProblemParams`] with the given machine count.
    pub fn from_params(params: &ProblemParams, machines: usize, seed: u64) -> Result<Self> {
        if let Some(m) = params.machines {
            if m != machines {
                return Err(param(format!(
                    "problem machines ({m}) does not match topology machines ({machines})"
                )));
            }
        }
        Self::generate(
            params.dimension,
            machines,
            params.sigma,
            params.zeta,
            params.shared_design,
            seed,
        )
    }

    /// Builds a problem from explicit per-machine data.
    pub fn from_parts(
        designs: Vec<DMatrix<f64>>,
        targets: Vec<DVector<f64>>,
        sigma: f64,
    ) -> Result<Self> {
        if designs.is_empty() || designs.len() != targets.len() {
            return Err(param("need one target per design matrix and at least one machine"));
        }
        let d = designs[0].ncols();
        if d == 0 {
            return Err(param("dimension must be positive"));
        }
        for (i, (a, b)) in designs.iter().zip(&targets).enumerate() {
            if a.ncols() != d || a.nrows() != b.len() {
                return Err(Error::Shape {
                    context: "LeastSquaresProblem::from_parts",
                    expected: format!("A_{i} with {d} columns and rows matching b_{i}"),
                    found: format!("{}x{} with target length {}", a.nrows(), a.ncols(), b.len()),
                });
            }
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(param(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        let shared_design = designs.windows(2).all(|w| w[0] == w[1]);
        let smoothness = designs.iter().map(max_eigenvalue_of_gram).fold(0.0, f64::max);
        Ok(LeastSquaresProblem {
            dimension: d,
            designs,
            targets,
            planted: None,
            noise_std: sigma,
            heterogeneity: 0.0,
            shared_design,
            smoothness,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn machines(&self) -> usize {
        self.designs.len()
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn heterogeneity(&self) -> f64 {
        self.heterogeneity
    }

    pub fn shared_design(&self) -> bool {
        self.shared_design
    }

    /// The planted point `x_sharp`; `None` for problems built from parts.
    pub fn planted(&self) -> Option<&DVector<f64>> {
        self.planted.as_ref()
    }

    pub fn design(&self, machine: usize) -> &DMatrix<f64> {
        &self.designs[machine]
    }

    pub fn target(&self, machine: usize) -> &DVector<f64> {
        &self.targets[machine]
    }

    /// `L = max_i lambda_max(A_i^T A_i)`.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn check_machine(&self, machine: usize) -> Result<()> {
        if machine >= self.machines() {
            return Err(param(format!(
                "machine index {machine} out of range (M = {})",
                self.machines()
            )));
        }
        Ok(())
    }

    fn check_point(&self, len: usize) -> Result<()> {
        if len != self.dimension {
            return Err(Error::Shape {
                context: "least-squares point",
                expected: format!("length {}", self.dimension),
                found: format!("length {len}"),
            });
        }
        Ok(())
    }

    /// `f_i(x) = 1/2 ||A_i x - b_i||^2`.
    pub fn local_loss(&self, machine: usize, x: &DVector<f64>) -> Result<f64> {
        self.check_machine(machine)?;
        self.check_point(x.len())?;
        let r = &self.designs[machine] * x - &self.targets[machine];
        Ok(0.5 * r.norm_squared())
    }

    /// `f(x) = (1/M) sum_i f_i(x)`.
    pub fn loss(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_point(x.len())?;
        Ok(self.loss_unchecked(x.as_view()))
    }

    pub(crate) fn loss_unchecked(&self, x: DVectorView<'_, f64>) -> f64 {
        let total: f64 = self
            .designs
            .iter()
            .zip(&self.targets)
            .map(|(a, b)| 0.5 * (a * x - b).norm_squared())
            .sum();
        total / self.machines() as f64
    }

    /// `grad f_i(x) = A_i^T (A_i x - b_i)`.
    pub fn exact_grad(&self, machine: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_machine(machine)?;
        self.check_point(x.len())?;
        let mut out = DVector::zeros(self.dimension);
        let mut residual = DVector::zeros(self.designs[machine].nrows());
        self.grad_into(machine, x.as_view(), &mut residual, &mut out);
        Ok(out)
    }

    /// Writes `A_i^T (A_i x - b_i)` into `out`, using `residual` as scratch.
    pub(crate) fn grad_into(
        &self,
        machine: usize,
        x: DVectorView<'_, f64>,
        residual: &mut DVector<f64>,
        out: &mut DVector<f64>,
    ) {
        let a = &self.designs[machine];
        residual.copy_from(&self.targets[machine]);
        residual.gemv(1.0, a, &x, -1.0);
        out.gemv_tr(1.0, a, residual, 0.0);
    }

    /// Adds `N(0, sigma^2/d I)` noise to `out` from `rng`. No draws when `sigma == 0`.
    pub(crate) fn add_noise<R: Rng + ?Sized>(&self, out: &mut DVector<f64>, rng: &mut R) {
        if self.noise_std == 0.0 {
            return;
        }
        let scale = self.noise_std / (self.dimension as f64).sqrt();
        for v in out.iter_mut() {
            *v += scale * rng.sample::<f64, _>(StandardNormal);
        }
    }

    /// Exact gradient plus Gaussian noise drawn from `stream`.
    pub fn stoch_grad<R: Rng + ?Sized>(
        &self,
        machine: usize,
        x: &DVector<f64>,
        round: usize,
        stream: &mut R,
    ) -> Result<GradientSample> {
        let mut value = self.exact_grad(machine, x)?;
        self.add_noise(&mut value, stream);
        Ok(GradientSample {
            value,
            machine,
            round,
        })
    }

    /// `sum_i A_i^T A_i` and `sum_i A_i^T b_i`.
    fn normal_equations(&self) -> (DMatrix<f64>, DVector<f64>) {
        let d = self.dimension;
        let mut gram = DMatrix::zeros(d, d);
        let mut rhs = DVector::zeros(d);
        for (a, b) in self.designs.iter().zip(&self.targets) {
            gram.gemm_tr(1.0, a, a, 1.0);
            rhs.gemv_tr(1.0, a, b, 1.0);
        }
        (gram, rhs)
    }

    /// Average Hessian `(1/M) sum_i A_i^T A_i`.
    pub fn mean_hessian(&self) -> DMatrix<f64> {
        self.normal_equations().0 / self.machines() as f64
    }

    /// Global minimizer via the normal equations.
    pub fn optimum(&self) -> Result<Optimum> {
        let (gram, rhs) = self.normal_equations();
        let eig = SymmetricEigen::new(gram.clone());
        let hi = eig.eigenvalues.max();
        let lo = eig.eigenvalues.min();
        if !(lo > 0.0) || hi / lo > MAX_CONDITION {
            return Err(Error::Degenerate(format!(
                "normal matrix is singular or ill-conditioned (eigenvalues in [{lo:e}, {hi:e}])"
            )));
        }
        let chol = gram
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Degenerate("normal matrix is not positive definite".into()))?;
        let mut point = chol.solve(&rhs);
        // One step of iterative refinement.
        let residual = &rhs - &gram * &point;
        point += chol.solve(&residual);
        let loss = self.loss_unchecked(point.as_view());
        Ok(Optimum { point, loss })
    }

    /// Full gradient of the global objective.
    pub fn global_grad(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point(x.len())?;
        let mut total = DVector::zeros(self.dimension);
        for i in 0..self.machines() {
            total += self.exact_grad(i, x)?;
        }
        Ok(total / self.machines() as f64)
    }
}
