//! Estimation of the probability that Gaussian power-injection
//! fluctuations leave a DC power-flow reliability polytope.
//!
//! The estimator samples from a mixture of the nominal Gaussian
//! conditioned on single half-space violations, reweights by an exact
//! density ratio, and adapts the mixture weights online by entropic
//! mirror descent on either the estimator variance or a KL objective.
//! Plain Monte Carlo and the static tail-proportional mixture serve as
//! baselines. All estimators are deterministic in the seed, independent
//! of parallelism.

pub mod batch;
pub mod bench;
pub mod export;
pub mod gaussian;
pub mod grid;
pub mod mixture;
pub mod normal;
pub mod optimizer;
pub mod quadrature;
pub mod rng;
