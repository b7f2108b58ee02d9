//! Simulation and estimation toolkit for exchangeability-based causal
//! inference: reproducible data-generating processes with quota sampling,
//! balance diagnostics over treatment groups, causal diagrams with
//! d-separation and back-door checks, and marginal-contrast estimators from
//! direct standardization to a Metropolis-sampled Bayesian standardization
//! and the two-time-point g-formula.

pub mod dgp;
pub mod diagnostics;
pub mod graph;
pub mod inference;
pub mod rng;
pub mod stats;
