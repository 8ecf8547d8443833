//! Monte Carlo scenario optimization for data-driven chance-constrained
//! programs in small-sample regimes.
//!
//! When the observed data are too few to back a scenario program directly,
//! the pipeline here fits a parametric model, wraps the estimate in a
//! chi-square-calibrated divergence set, tightens the violation tolerance
//! accordingly, and then solves a scenario program on as many Monte Carlo
//! draws as that tightened tolerance demands. The crate is organized as:
//!
//! - [`numerics`]: special functions, quadrature, scalar optimization
//! - [`sizes`]: binomial-tail sample-size calculus (exact and two-stage)
//! - [`divergence`]: chi-square tolerance translation rules
//! - [`models`]: parametric families, MLE, uncertainty-set calibration
//! - [`sampler`]: seeded, stream-split random generation
//! - [`generating`]: generating-distribution design and worst-case divergence
//! - [`scenario`]: scenario-program assembly and the interior-point solver
//! - [`pipeline`]: the end-to-end procedures
//! - [`bench`]: repeated-trial experiment harness

pub mod bench;
pub mod divergence;
pub mod error;
pub mod generating;
pub mod models;
pub mod numerics;
pub mod pipeline;
pub mod sampler;
pub mod scenario;
pub mod sizes;

pub use error::{Error, Result};
