//! Simulation and analysis toolkit for decentralized stochastic convex
//! optimization over gossip networks.
//!
//! * [`topology`]: gossip matrices, spectral gaps, gossip steps
//! * [`problem`]: the synthetic distributed least-squares objective
//! * [`optim`]: D-SGD and Decentralized Anytime SGD (DAT-SGD)
//! * [`metrics`]: consensus distances and error measures
//! * [`theory`]: closed-form learning rates and bounds
//! * [`harness`]: seed replication, grid search, sweeps and bound checks
//!
//! ```
//! use datsgd::optim::{run, Algorithm, InitialPoint, RunConfig, WeightSchedule};
//! use datsgd::problem::ProblemParams;
//! use datsgd::topology::TopologySpec;
//!
//! let config = RunConfig {
//!     algorithm: Algorithm::Datsgd,
//!     schedule: WeightSchedule::Linear,
//!     learning_rate: 0.002,
//!     rounds: 200,
//!     topology: TopologySpec::Ring { machines: 8 },
//!     problem: ProblemParams { dimension: 10, machines: None, sigma: 1.0, zeta: 0.5, shared_design: false },
//!     seed: 1,
//!     problem_seed: None,
//!     metric_stride: 50,
//!     initial_point: InitialPoint::Zero,
//! };
//! let out = run(&config).unwrap();
//! assert_eq!(out.trace.rounds(), vec![1, 50, 100, 150, 200]);
//! assert!(out.final_metrics.per_node_error.is_finite());
//! ```

pub mod error;
pub mod harness;
pub mod metrics;
pub mod optim;
pub mod problem;
pub mod seed;
pub mod theory;
pub mod topology;

pub use error::{Error, Result};

/// Chapters of the guide in `book/`, compiled so their snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/topology.md")]
    mod topology {}
    #[doc = include_str!("../../../book/src/problem.md")]
    mod problem {}
    #[doc = include_str!("../../../book/src/algorithms.md")]
    mod algorithms {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/theory.md")]
    mod theory {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
