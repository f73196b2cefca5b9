//! Randomized-response toolkit for local differential privacy.
//!
//! The crate is organised bottom-up:
//!
//! - [`matrix`]: row-stochastic perturbation kernels.
//! - [`mechanisms`]: the randomized-response families (Warner, GRR, EWRR,
//!   and the three-answer variants `Rr3Dagger`, `Rr3DoubleDagger`,
//!   `Rr3Club`), per-participant perturbation and grouped perturbation of
//!   counts.
//! - [`estimators`]: inversion and closed-form maximum-likelihood
//!   estimators with their analytic variances, plus a numeric MLE for
//!   arbitrary kernels.
//! - [`privacy`]: the ε-LDP level of a kernel, sequential composition,
//!   optimal-parameter bounds over feasibility regions and the budgets of
//!   the key-value protocols, each paired with a brute-force oracle.
//! - [`graph`] and [`protocols`]: weighted bipartite graphs, the
//!   key-value perturbation protocols (LPP, LPP‡, PCKV-UE) and server-side
//!   aggregation of degree and weight statistics.
//!
//! Randomness always comes from an explicit stream; see [`rng`] for the
//! keyed stream derivation used to make simulations schedule-independent.

pub mod error;
pub mod estimators;
pub mod graph;
pub mod matrix;
pub mod mechanisms;
pub mod privacy;
pub mod protocols;
pub mod rng;
pub mod sampling;
pub mod stats;
pub mod vectors;

pub use error::{Error, Result};
pub use matrix::ProbabilityMatrix;
pub use mechanisms::{AnswerIndex, MechanismSpec};
pub use vectors::{CountVector, ProportionRole, ProportionVector};
