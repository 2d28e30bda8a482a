//! Gossip matrices for the supported network topologies.
//!
//! A gossip matrix `P` is an `M x M` symmetric, doubly stochastic matrix with
//! nonnegative entries, supported on the edges of the communication graph plus
//! the diagonal. One gossip round replaces the `d x M` matrix of local vectors
//! `X` with `X P`, i.e. every machine takes a weighted average of its own
//! vector and its neighbors' vectors.
//!
//! The rate at which repeated gossip drives the columns of `X` towards their
//! mean is governed by the spectral gap `rho = 1 - |lambda_2|`:
//!
//! ```text
//! ||X P - Xbar||_F^2 <= (1 - rho) ||X - Xbar||_F^2
//! ```
//!
//! Built-in weightings:
//!
//! | topology      | weights                                                   |
//! |---------------|-----------------------------------------------------------|
//! | ring          | 1/3 on self and each of the two neighbors                 |
//! | torus         | 1/5 on self and each of the four grid neighbors (wrapped) |
//! | complete      | 1/M everywhere                                            |
//! | one-peer exp  | round t: i pairs with `i ^ 2^((t-1) mod log2 M)`, 1/2 each |
//! | custom        | Metropolis-Hastings, `1 / (1 + max(deg_i, deg_j))`        |

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Absolute tolerance used when checking row/column sums and symmetry.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Below this gap a matrix is treated as disconnected or periodic.
const ZERO_GAP_TOL: f64 = 1e-12;

/// Description of a communication graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    Ring { machines: usize },
    Torus { rows: usize, cols: usize },
    Complete { machines: usize },
    OnePeerExp { machines: usize },
    Custom { adjacency: Vec<Vec<bool>> },
}

/// Topology family, without a size. Used by sweeps that vary the machine count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Ring,
    Torus,
    Complete,
    OnePeerExp,
    Custom,
}

impl TopologyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TopologyKind::Ring => "ring",
            TopologyKind::Torus => "torus",
            TopologyKind::Complete => "complete",
            TopologyKind::OnePeerExp => "one_peer_exp",
            TopologyKind::Custom => "custom",
        }
    }

    /// Stable small integer used in seed derivation.
    pub(crate) fn code(self) -> u64 {
        match self {
            TopologyKind::Ring => 1,
            TopologyKind::Torus => 2,
            TopologyKind::Complete => 3,
            TopologyKind::OnePeerExp => 4,
            TopologyKind::Custom => 5,
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl TopologySpec {
    pub fn kind(&self) -> TopologyKind {
        match self {
            TopologySpec::Ring { .. } => TopologyKind::Ring,
            TopologySpec::Torus { .. } => TopologyKind::Torus,
            TopologySpec::Complete { .. } => TopologyKind::Complete,
            TopologySpec::OnePeerExp { .. } => TopologyKind::OnePeerExp,
            TopologySpec::Custom { .. } => TopologyKind::Custom,
        }
    }

    pub fn machines(&self) -> usize {
        match self {
            TopologySpec::Ring { machines }
            | TopologySpec::Complete { machines }
            | TopologySpec::OnePeerExp { machines } => *machines,
            TopologySpec::Torus { rows, cols } => rows * cols,
            TopologySpec::Custom { adjacency } => adjacency.len(),
        }
    }

    /// Builds the `kind` topology on `machines` nodes. A torus must be a
    /// perfect square and is laid out as a `sqrt(M) x sqrt(M)` grid.
    pub fn for_machines(kind: TopologyKind, machines: usize) -> Result<Self> {
        let spec = match kind {
            TopologyKind::Ring => TopologySpec::Ring { machines },
            TopologyKind::Complete => TopologySpec::Complete { machines },
            TopologyKind::OnePeerExp => TopologySpec::OnePeerExp { machines },
            TopologyKind::Torus => {
                let side = integer_sqrt(machines);
                if side * side != machines {
                    return Err(param(format!(
                        "torus requires a perfect-square machine count, got {machines}"
                    )));
                }
                TopologySpec::Torus {
                    rows: side,
                    cols: side,
                }
            }
            TopologyKind::Custom => {
                return Err(param("custom topologies need an explicit adjacency matrix"))
            }
        };
        spec.check()?;
        Ok(spec)
    }

    /// Checks the structural constraints of the spec.
    pub fn check(&self) -> Result<()> {
        match self {
            TopologySpec::Ring { machines } => {
                if *machines < 3 {
                    return Err(param(format!("ring requires machines >= 3, got {machines}")));
                }
            }
            TopologySpec::Torus { rows, cols } => {
                if *rows < 3 || *cols < 3 {
                    return Err(param(format!(
                        "torus requires rows >= 3 and cols >= 3, got {rows}x{cols}"
                    )));
                }
            }
            TopologySpec::Complete { machines } => {
                if *machines < 1 {
                    return Err(param("complete graph requires machines >= 1"));
                }
            }
            TopologySpec::OnePeerExp { machines } => {
                if *machines < 2 || !machines.is_power_of_two() {
                    return Err(param(format!(
                        "one-peer exponential graph requires machines to be a power of two >= 2, got {machines}"
                    )));
                }
            }
            TopologySpec::Custom { adjacency } => {
                let m = adjacency.len();
                if m == 0 {
                    return Err(param("custom adjacency must be nonempty"));
                }
                for (i, row) in adjacency.iter().enumerate() {
                    if row.len() != m {
                        return Err(param(format!(
                            "custom adjacency must be square: row {i} has {} entries, expected {m}",
                            row.len()
                        )));
                    }
                    if row[i] {
                        return Err(param(format!("custom adjacency has a self-loop at node {i}")));
                    }
                    for j in 0..i {
                        if row[j] != adjacency[j][i] {
                            return Err(param(format!(
                                "custom adjacency must be symmetric: ({i},{j}) != ({j},{i})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn integer_sqrt(n: usize) -> usize {
    let mut s = (n as f64).sqrt() as usize;
    while s * s > n {
        s -= 1;
    }
    while (s + 1) * (s + 1) <= n {
        s += 1;
    }
    s
}

/// Symmetric doubly stochastic mixing matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GossipMatrix {
    weights: DMatrix<f64>,
}

impl GossipMatrix {
    /// Wraps `weights` after checking every gossip-matrix invariant.
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        let report = validate(&weights);
        if !report.is_valid() {
            return Err(param(format!("not a gossip matrix: {report}")));
        }
        Ok(GossipMatrix { weights })
    }

    pub fn size(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    /// `|lambda_2|`: the largest eigenvalue magnitude of `P - (1/M) 1 1^T`.
    ///
    /// Equals `1` for a disconnected or periodic matrix. Never fails.
    pub fn second_eigenvalue_magnitude(&self) -> f64 {
        let m = self.size();
        let uniform = 1.0 / m as f64;
        let centered = self.weights.map(|w| w - uniform);
        let eig = SymmetricEigen::new(centered);
        eig.eigenvalues.iter().fold(0.0_f64, |acc, &l| acc.max(l.abs()))
    }
}

/// Spectral gap `rho = 1 - |lambda_2|`, in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SpectralGap(f64);

impl SpectralGap {
    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for SpectralGap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}", self.0)
    }
}

/// Computes the spectral gap via a symmetric eigensolve of `P - (1/M) 1 1^T`.
pub fn spectral_gap(p: &GossipMatrix) -> Result<SpectralGap> {
    let second = p.second_eigenvalue_magnitude();
    if second >= 1.0 - ZERO_GAP_TOL {
        return Err(Error::ZeroSpectralGap {
            second_eigenvalue: second,
        });
    }
    Ok(SpectralGap((1.0 - second).min(1.0)))
}

/// Round-indexed gossip matrices. Rounds start at 1.
#[derive(Debug, Clone)]
pub enum GossipSequence {
    Static(GossipMatrix),
    /// Cycles through the matrices, one per round.
    Periodic(Vec<GossipMatrix>),
}

impl GossipSequence {
    /// Matrix used in round `t >= 1`.
    pub fn at(&self, t: usize) -> &GossipMatrix {
        debug_assert!(t >= 1, "rounds are 1-based");
        match self {
            GossipSequence::Static(p) => p,
            GossipSequence::Periodic(ps) => &ps[(t.max(1) - 1) % ps.len()],
        }
    }

    pub fn period(&self) -> usize {
        match self {
            GossipSequence::Static(_) => 1,
            GossipSequence::Periodic(ps) => ps.len(),
        }
    }

    pub fn machines(&self) -> usize {
        self.at(1).size()
    }

    /// The distinct matrices of one period, in round order.
    pub fn matrices(&self) -> &[GossipMatrix] {
        match self {
            GossipSequence::Static(p) => std::slice::from_ref(p),
            GossipSequence::Periodic(ps) => ps,
        }
    }

    /// Product `P_1 P_2 ... P_tau` over one period.
    pub fn period_product(&self) -> DMatrix<f64> {
        let m = self.machines();
        self.matrices()
            .iter()
            .fold(DMatrix::identity(m, m), |acc, p| acc * p.weights())
    }

    /// Per-round gap used to parameterize theory formulas.
    ///
    /// Static sequences report the matrix's own gap. Time-varying sequences
    /// report the gap of the period product divided by the period, so the
    /// one-peer exponential graph on `M` nodes gets `1 / log2(M)`.
    pub fn effective_gap(&self) -> Result<SpectralGap> {
        match self {
            GossipSequence::Static(p) => spectral_gap(p),
            GossipSequence::Periodic(ps) => {
                let product = self.period_product();
                // The product of symmetric matrices need not be symmetric, so
                // use the spectral norm of (product - J) instead of an eigensolve.
                let m = self.machines();
                let uniform = 1.0 / m as f64;
                let centered = product.map(|w| w - uniform);
                let norm = centered.svd(false, false).singular_values.max();
                if norm >= 1.0 - ZERO_GAP_TOL {
                    return Err(Error::ZeroSpectralGap {
                        second_eigenvalue: norm,
                    });
                }
                Ok(SpectralGap((1.0 - norm) / ps.len() as f64))
            }
        }
    }
}

/// Builds the gossip sequence for `spec`.
pub fn build(spec: &TopologySpec) -> Result<GossipSequence> {
    spec.check()?;
    let seq = match spec {
        TopologySpec::Ring { machines } => {
            let m = *machines;
            let w = 1.0 / 3.0;
            let mut p = DMatrix::zeros(m, m);
            for i in 0..m {
                p[(i, i)] = w;
                p[(i, (i + 1) % m)] = w;
                p[(i, (i + m - 1) % m)] = w;
            }
            GossipSequence::Static(GossipMatrix::new(p)?)
        }
        TopologySpec::Torus { rows, cols } => {
            let (r, c) = (*rows, *cols);
            let m = r * c;
            let w = 1.0 / 5.0;
            let idx = |a: usize, b: usize| a * c + b;
            let mut p = DMatrix::zeros(m, m);
            for a in 0..r {
                for b in 0..c {
                    let i = idx(a, b);
                    p[(i, i)] = w;
                    p[(i, idx((a + 1) % r, b))] = w;
                    p[(i, idx((a + r - 1) % r, b))] = w;
                    p[(i, idx(a, (b + 1) % c))] = w;
                    p[(i, idx(a, (b + c - 1) % c))] = w;
                }
            }
            GossipSequence::Static(GossipMatrix::new(p)?)
        }
        TopologySpec::Complete { machines } => {
            let m = *machines;
            GossipSequence::Static(GossipMatrix::new(DMatrix::from_element(
                m,
                m,
                1.0 / m as f64,
            ))?)
        }
        TopologySpec::OnePeerExp { machines } => {
            let m = *machines;
            let rounds = m.trailing_zeros() as usize;
            let mut ps = Vec::with_capacity(rounds);
            for k in 0..rounds {
                let offset = 1usize << k;
                let mut p = DMatrix::zeros(m, m);
                for i in 0..m {
                    p[(i, i)] = 0.5;
                    p[(i, i ^ offset)] = 0.5;
                }
                ps.push(GossipMatrix::new(p)?);
            }
            GossipSequence::Periodic(ps)
        }
        TopologySpec::Custom { adjacency } => {
            let m = adjacency.len();
            let degree: Vec<usize> = adjacency
                .iter()
                .map(|row| row.iter().filter(|&&e| e).count())
                .collect();
            let mut p = DMatrix::zeros(m, m);
            for i in 0..m {
                for j in 0..m {
                    if adjacency[i][j] {
                        p[(i, j)] = 1.0 / (1 + degree[i].max(degree[j])) as f64;
                    }
                }
            }
            for i in 0..m {
                let off: f64 = (0..m).filter(|&j| j != i).map(|j| p[(i, j)]).sum();
                p[(i, i)] = 1.0 - off;
            }
            GossipSequence::Static(GossipMatrix::new(p)?)
        }
    };
    Ok(seq)
}

/// One gossip round: returns `X P`.
pub fn gossip_step(x: &DMatrix<f64>, p: &GossipMatrix) -> Result<DMatrix<f64>> {
    if x.ncols() != p.size() {
        return Err(Error::Shape {
            context: "gossip_step",
            expected: format!("{} columns", p.size()),
            found: format!("{} columns", x.ncols()),
        });
    }
    Ok(x * p.weights())
}

/// A single violated gossip-matrix invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NotSquare { rows: usize, cols: usize },
    NonFinite { count: usize },
    Asymmetric { max_deviation: f64 },
    RowSums { rows: Vec<usize>, max_deviation: f64 },
    ColumnSums { cols: Vec<usize>, max_deviation: f64 },
    Negative { count: usize, most_negative: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotSquare { rows, cols } => write!(f, "not square ({rows}x{cols})"),
            Violation::NonFinite { count } => write!(f, "{count} non-finite entries"),
            Violation::Asymmetric { max_deviation } => {
                write!(f, "asymmetric (max |P_ij - P_ji| = {max_deviation:e})")
            }
            Violation::RowSums {
                rows,
                max_deviation,
            } => write!(f, "row sums off at rows {rows:?} (max deviation {max_deviation:e})"),
            Violation::ColumnSums {
                cols,
                max_deviation,
            } => write!(
                f,
                "column sums off at columns {cols:?} (max deviation {max_deviation:e})"
            ),
            Violation::Negative {
                count,
                most_negative,
            } => write!(f, "{count} negative entries (min {most_negative:e})"),
        }
    }
}

/// Result of [`validate`]. Empty means the matrix is a valid gossip matrix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Lists every gossip-matrix invariant violated by `weights`.
pub fn validate(weights: &DMatrix<f64>) -> ValidationReport {
    let mut violations = Vec::new();
    let (rows, cols) = weights.shape();
    if rows != cols || rows == 0 {
        violations.push(Violation::NotSquare { rows, cols });
        return ValidationReport { violations };
    }
    let non_finite = weights.iter().filter(|w| !w.is_finite()).count();
    if non_finite > 0 {
        violations.push(Violation::NonFinite { count: non_finite });
        return ValidationReport { violations };
    }
    let m = rows;

    let mut asym = 0.0_f64;
    for i in 0..m {
        for j in 0..i {
            asym = asym.max((weights[(i, j)] - weights[(j, i)]).abs());
        }
    }
    if asym > STOCHASTIC_TOL {
        violations.push(Violation::Asymmetric { max_deviation: asym });
    }

    let row_dev: Vec<f64> = weights.row_iter().map(|r| (r.sum() - 1.0).abs()).collect();
    if let Some(v) = sum_violation(&row_dev) {
        violations.push(Violation::RowSums {
            rows: v.0,
            max_deviation: v.1,
        });
    }
    let col_dev: Vec<f64> = weights
        .column_iter()
        .map(|c| (c.sum() - 1.0).abs())
        .collect();
    if let Some(v) = sum_violation(&col_dev) {
        violations.push(Violation::ColumnSums {
            cols: v.0,
            max_deviation: v.1,
        });
    }

    let negatives: Vec<f64> = weights.iter().copied().filter(|&w| w < 0.0).collect();
    if !negatives.is_empty() {
        violations.push(Violation::Negative {
            count: negatives.len(),
            most_negative: negatives.iter().copied().fold(0.0, f64::min),
        });
    }
    ValidationReport { violations }
}

fn sum_violation(deviations: &[f64]) -> Option<(Vec<usize>, f64)> {
    let bad: Vec<usize> = deviations
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > STOCHASTIC_TOL)
        .map(|(i, _)| i)
        .collect();
    if bad.is_empty() {
        None
    } else {
        let max = bad.iter().map(|&i| deviations[i]).fold(0.0, f64::max);
        Some((bad, max))
    }
}
