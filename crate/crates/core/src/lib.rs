//! Exact first-passage-time analysis for the stochastic logistic growth model
//! with constant-effort harvesting,
//!
//! ```text
//! dX = r X (1 - X/K) dt - q E X dt + sigma X dW,   X(0) = x0.
//! ```
//!
//! The crate computes moments and cumulants of upcrossing and downcrossing
//! times from power-series expansions of their Laplace transforms, rebuilds
//! the density with a Laguerre-Gamma orthogonal expansion, and checks the
//! results against an independent confluent-hypergeometric oracle and a
//! positivity-preserving Monte Carlo simulator. Parameter subsets can be
//! fitted to observed passage times by maximum likelihood.
//!
//! Layout:
//!
//! - [`model`]: raw and derived parameters, the passage problem
//! - [`series`]: exponential-convention formal power series and the exact
//!   combinatorial kernels (Stirling numbers, Bell polynomials)
//! - [`kernels`]: the Lambda/M coefficient tables and building-block series
//! - [`analytics`]: moments, cumulants, closed-form mean and variance
//! - [`oracle`]: direct Kummer/Tricomi evaluation and finite-difference moments
//! - [`laguerre`]: Laguerre-Gamma density approximant
//! - [`montecarlo`]: Lie-Trotter simulation of passage times
//! - [`inference`]: maximum-likelihood fitting on passage-time samples

pub mod analytics;
pub mod error;
pub mod inference;
pub mod kernels;
pub mod laguerre;
pub mod model;
pub mod montecarlo;
pub mod mp;
pub mod oracle;
pub mod quad;
pub mod series;

pub use error::{FptError, Result};
pub use model::{derive_params, validate_problem, DerivedParams, Direction, FptProblem, ModelParams};
