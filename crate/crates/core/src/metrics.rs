//! Consensus diagnostics and error measures.
//!
//! All matrices are `d x M`, one column per machine.
//!
//! * `Gamma_t`: consensus distance of the query points `X_t`
//! * `Xi_t`: consensus distance of the iterates `W_t`
//! * `Psi_t`: consensus distance of the sampled gradients `G_t`
//!
//! where the consensus distance of `Y` is `(1/M) sum_i ||y_i - ybar||^2`.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::problem::{LeastSquaresProblem, Optimum};

/// Excess losses more negative than this indicate a numerical problem.
pub const EXCESS_LOSS_FLOOR: f64 = -1e-10;

/// Column mean of `y`.
pub fn column_mean(y: &DMatrix<f64>) -> DVector<f64> {
    y.column_mean()
}

/// `(1/M) sum_i ||y_i - ybar||^2`.
pub fn consensus_distance(y: &DMatrix<f64>) -> f64 {
    let m = y.ncols();
    if m == 0 {
        return 0.0;
    }
    let mean = y.column_mean();
    let total: f64 = y
        .column_iter()
        .map(|c| (c - &mean).norm_squared())
        .sum();
    total / m as f64
}

/// `Psi`: consensus distance applied to a matrix of sampled gradients.
pub fn gradient_consensus(g: &DMatrix<f64>) -> f64 {
    consensus_distance(g)
}

/// `(1/M) sum_i ||y_i - x_star||^2`.
pub fn per_node_error(y: &DMatrix<f64>, x_star: &DVector<f64>) -> f64 {
    let m = y.ncols();
    if m == 0 {
        return 0.0;
    }
    let total: f64 = y
        .column_iter()
        .map(|c| (c - x_star).norm_squared())
        .sum();
    total / m as f64
}

/// Precomputed optimum and curvature of a problem, for cheap and
/// cancellation-free excess-loss evaluation.
#[derive(Debug, Clone)]
pub struct Reference {
    pub optimum: Optimum,
    mean_hessian: DMatrix<f64>,
}

impl Reference {
    pub fn new(problem: &LeastSquaresProblem) -> Result<Self> {
        Ok(Reference {
            optimum: problem.optimum()?,
            mean_hessian: problem.mean_hessian(),
        })
    }

    pub fn x_star(&self) -> &DVector<f64> {
        &self.optimum.point
    }

    pub fn min_loss(&self) -> f64 {
        self.optimum.loss
    }
}

/// `f(x) - f(x*)`.
///
/// For a quadratic with `grad f(x*) = 0` this equals
/// `1/2 (x - x*)^T H (x - x*)`, which is evaluated directly. Values in
/// `[EXCESS_LOSS_FLOOR, 0)` are clamped to zero; anything below the floor is
/// returned unchanged so callers can flag it.
pub fn excess_loss(reference: &Reference, x: &DVector<f64>) -> f64 {
    let e = x - reference.x_star();
    let value = 0.5 * e.dot(&(&reference.mean_hessian * &e));
    if (EXCESS_LOSS_FLOOR..0.0).contains(&value) {
        0.0
    } else {
        value
    }
}

/// One recorded round. Field order is the trace CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: usize,
    pub gamma: f64,
    pub xi: f64,
    pub psi: f64,
    pub loss_consensus: f64,
    pub excess_loss: f64,
    pub per_node_error_x: f64,
    pub per_node_error_w: f64,
}

/// Trace CSV header.
pub const TRACE_COLUMNS: [&str; 8] = [
    "round",
    "gamma",
    "xi",
    "psi",
    "loss_consensus",
    "excess_loss",
    "per_node_error_x",
    "per_node_error_w",
];

/// Per-round diagnostics of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTrace {
    pub records: Vec<TraceRecord>,
}

impl MetricsTrace {
    pub fn rounds(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.round).collect()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Checks that every value is finite and nonnegative and that losses
    /// are at least `min_loss` (up to [`EXCESS_LOSS_FLOOR`]).
    pub fn is_well_formed(&self, min_loss: f64) -> bool {
        self.records.iter().all(|r| {
            [r.gamma, r.xi, r.psi, r.per_node_error_x, r.per_node_error_w, r.excess_loss]
                .iter()
                .all(|v| v.is_finite() && *v >= 0.0)
                && r.loss_consensus.is_finite()
                && r.loss_consensus >= min_loss + EXCESS_LOSS_FLOOR
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        if self.records.is_empty() {
            wtr.write_record(TRACE_COLUMNS)?;
        }
        for r in &self.records {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}
