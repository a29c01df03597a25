//! Self-repellent random walks on undirected graphs.
//!
//! The walk moves according to a nonlinear kernel `K[x]` that down-weights
//! neighbours in proportion to how often they have already been visited,
//! relative to a target distribution `mu`. The crate covers the base chain,
//! the kernel, the stochastic-approximation process with truncation, the
//! mean-field ODE, closed-form asymptotic covariances and the estimators used
//! to compare simulation against theory.

pub mod asymptotics;
pub mod chain;
pub mod error;
pub mod estimators;
pub mod graph;
pub mod kernel;
pub mod ode;
pub mod process;
pub mod validation;

pub use chain::{build_mhrw, build_srw, compute_spectrum, slem, verify_dbe, ReversibleKernel, Spectrum};
pub use error::{Error, Result};
pub use graph::{erdos_renyi, largest_connected_component, load_edge_list, Graph};
pub use kernel::Repellence;
