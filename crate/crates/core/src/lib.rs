//! Negative binomial approximation to call-function expectations
//! `E[(V - z)^+]` for sums of independent or locally dependent counting
//! variables, with certified error bounds.
//!
//! The crate is organized around a verification-first workflow:
//!
//! * [`nb`] - NB pmf/moments, the certified call-expectation series, and
//!   moment matching;
//! * [`stein`] - the Stein operator and the explicit solution for the
//!   call function, with every magnitude envelope it satisfies;
//! * [`dist`] - finite/truncated integer distributions carrying tail
//!   certificates;
//! * [`dependency`] - locally dependent collections (product, joint
//!   table, pairwise Bernoulli), their moments, conditional smoothing
//!   quantities, and a seeded sampler;
//! * [`bounds`] - the bound engine: mean- and variance-matched bounds
//!   for dependent and independent sums, closed-form Bernoulli/geometric
//!   specializations, and the Poisson comparison formulas;
//! * [`oracle`] - brute-force ground truth that every bound must
//!   dominate;
//! * [`cdo`] - tranche expected-loss analytics built on the count-space
//!   call reduction;
//! * [`reference`] - the built-in benchmark portfolio.

pub mod bounds;
pub mod cdo;
pub mod dependency;
pub mod dist;
pub mod error;
pub mod nb;
pub mod numeric;
pub mod oracle;
pub mod reference;
pub mod stein;

pub use error::{Error, Result};
