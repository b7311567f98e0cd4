//! Single-asset market with `N` privately informed traders and one
//! representative trend follower.
//!
//! Equilibria are computed three ways:
//!
//! * [`learning`]: online propensity dynamics, the agents' own adaptation;
//! * [`solver`]: direct minimization of the convex objective `H_eps` over
//!   nonnegative allocations, certified by its Kuhn-Tucker residual;
//! * [`replica`]: the replica-symmetric large-`N` solution.
//!
//! [`diagnostics`] covers the information content of the private signals and
//! [`experiment`] drives disorder-averaged sweeps and the overlay of the
//! analytic curves on simulated data.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod learning;
pub mod model;
pub mod replica;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use learning::{ChiKind, CostConvention, LearningConfig, PropensityState, RunSummary};
pub use model::{Allocation, AllocationGradient, MarketInstance, ModelParams, PriceTable, Signal, Trader};
pub use replica::ReplicaSolution;
pub use solver::{EquilibriumResult, Method, SolverOptions};
