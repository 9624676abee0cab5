//! Discrete flows on the N-ray star graph driven by one simple random walk, and their scaling limits.
//!
//! The crate is organised bottom-up:
//!
//! * [`star_graph`]: points, distance, finitely supported measures and the
//!   bounded-Lipschitz metric `beta`.
//! * [`walk`]: two-sided simple random walk windows, reflected statistics,
//!   hitting times and excursion decomposition.
//! * [`cv`]: the Csaki–Vincze walk transform and its inverse pair.
//! * [`chain`]: star-graph Markov chains and the excursion-flipping construction.
//! * [`flows`]: discrete flows of mappings `Psi` and kernels `K`.
//! * [`limit`]: rescaled paths, the Wiener kernel and convergence harnesses.
//! * [`stats`]: KS / chi-square machinery and the Walsh marginal check.
//! * [`checks`]: batch experiments that bundle the above into pass/fail reports.
//!
//! All randomness comes from [`rng::StreamKey`], a counter-based generator keyed
//! by `(seed, stream, channel)`, so every experiment is reproducible bit-for-bit
//! regardless of thread count.

pub mod chain;
pub mod checks;
pub mod cv;
pub mod dump;
pub mod flows;
pub mod limit;
pub mod rng;
pub mod star_graph;
pub mod stats;
pub mod walk;

pub use chain::{ChainKind, ChainPath};
pub use flows::FlowRealization;
pub use limit::ContinuousPath;
pub use star_graph::{
    beta_distance, graph_distance, DiscreteMeasure, GraphPoint, LatticePoint, Rational, RayParams,
};
pub use walk::{Excursion, Hit, WalkWindow};

use thiserror::Error;

/// Crate-level error; every module error converts into it.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] star_graph::GeometryError),
    #[error(transparent)]
    Walk(#[from] walk::WalkError),
    #[error(transparent)]
    Cv(#[from] cv::CvError),
    #[error(transparent)]
    Chain(#[from] chain::ChainError),
    #[error(transparent)]
    Flow(#[from] flows::FlowError),
    #[error(transparent)]
    Limit(#[from] limit::LimitError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
