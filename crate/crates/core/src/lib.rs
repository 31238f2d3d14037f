//! Exact enumeration, Monte Carlo sampling and inequality checks for
//! Bernoulli percolation and the random-cluster model on finite weighted graphs.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the bottom fix `f64`, which is what the command-line tool uses.

// `!(x > 0)` guards also reject NaN; index loops walk several parallel arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cluster;
pub mod config;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod ghost;
pub mod graph;
pub mod inequality;
pub mod samplers;
pub mod scalar;
pub mod stats;
pub mod suite;
pub mod unionfind;

pub use cluster::{
    cluster_radius, cluster_size_bfs, decompose, empirical_moments, tail_curve, ClusterDecomposition, Histogram,
    Provenance, RadiusMetric,
};
pub use config::EdgeConfig;
pub use error::{Error, Result};
pub use exact::{
    check_fkg_lattice, check_monotonic, enumerate_measure, exact_covariance, exact_event_prob, exact_tail,
    verify_derivative_formula, LatticeCheck, ModelParams, MonotonicCheck,
};
pub use graph::{apply_boundary, build_lattice, susceptibility_constant, BoundaryKind, GraphMeta, LatticeSpec};
pub use scalar::Scalar;

pub type Graph = graph::WeightedGraph<f64>;
pub type Lattice = graph::LatticeSpec<f64>;
pub type Params = exact::ModelParams<f64>;
pub type Measure = exact::ExactMeasure<f64>;
pub type Tail = cluster::TailCurve<f64>;
pub type Moments = cluster::MomentTable<f64>;
pub type Curves = inequality::BetaGridCurves<f64>;
pub type Report = inequality::InequalityReport<f64>;
