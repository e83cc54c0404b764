//! Sequential design of Gaussian-process surrogates for Bayesian inverse
//! problems.
//!
//! The crate provides:
//!
//! - multi-output GP regression with LMC kernels ([`gp`]),
//! - surrogate-based inverse-problem densities with the effective-covariance
//!   likelihood ([`inverse`]),
//! - an Adaptive Metropolis sampler ([`mcmc`]),
//! - a bounded simulated-annealing global optimizer with a local polish
//!   stage ([`optim`]),
//! - four sequential design strategies — IP-SUR, CSQ, D-optimal and
//!   I-optimal ([`design`]),
//! - performance metrics: posterior-weighted integrated variance, KDE
//!   entropy and KDE Kullback–Leibler divergence ([`metrics`]),
//! - benchmark direct models: banana, bimodal and the neutron-noise point
//!   model ([`testbeds`]),
//! - a replicated experiment harness with CSV records and SVG plots
//!   ([`harness`]).
//!
//! The `ipsur` binary exposes `run`, `summarize`, `plot` and `oracle`
//! subcommands over these modules.

pub mod design;
pub mod domain;
pub mod error;
pub mod gp;
pub mod harness;
pub mod inverse;
pub mod mcmc;
pub mod metrics;
pub mod optim;
pub mod oracles;
pub mod testbeds;

pub use error::{Error, Result};
