//! Estimation and inference for dyadic network formation models.
//!
//! Links form between pairs of nodes either under transferable utility (TU),
//! where a single index decides the link, or under non-transferable utility
//! (NTU), where both endpoints must consent and their idiosyncratic errors may
//! be correlated. The crate provides the likelihoods, maximum-likelihood
//! fitting, Wald and likelihood-ratio tests, a test of the TU restriction, and
//! a Monte Carlo harness.

pub mod dyaddata;
pub mod estimate;
pub mod inference;
pub mod likelihood;
pub mod montecarlo;
mod optim;
pub mod specfun;
