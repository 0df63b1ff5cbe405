//! Weighted tempered Gibbs sampling for Bayesian variable selection.
//!
//! The crate covers spike-and-slab regression with Gaussian, binomial and
//! negative-binomial likelihoods. Count likelihoods are handled through
//! Polya-Gamma augmentation. Every sampler draws a coordinate with probability
//! proportional to a tempered weight, flips it, and reports importance weights
//! alongside Rao-Blackwellized inclusion probabilities.
//!
//! Entry points:
//! - [`wtgs::wtgs_run`] and [`wtgs::wtgs_run_infer_h`] for the linear model,
//! - [`subset::subset_wtgs_run`] for the subset-restricted linear sampler,
//! - [`pg_chain::pg_wtgs_run`] and [`pg_chain::subset_pg_wtgs_run`] for counts,
//! - [`chain::run_chains`] for merged multi-chain runs,
//! - [`oracle`] for exact posteriors on small problems.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod error;
pub mod estimators;
pub mod mll;
pub mod model;
pub mod oracle;
pub mod pg;
pub mod pg_chain;
pub mod subset;
pub mod synthetic;
pub mod wtgs;

pub use error::{Error, Result};
pub use estimators::{ChainOutput, Diagnostics, PosteriorSummary, WeightedAccumulator, WeightedSample};
pub use model::{
    chain_rng, seeded_rng, AuxIndex, ChainRng, ChainState, Dataset, GammaState, InclusionPrior, Likelihood,
    SamplerConfig, SubsetSpec, Variant,
};
