//! Bayesian abundance estimation for closed populations with individual
//! heterogeneity.
//!
//! The likelihood of such models is an intractable integral over the
//! per-individual heterogeneity terms. This crate fits them by MCMC along
//! two routes: a semi-complete data likelihood, where the heterogeneity of
//! the observed individuals is imputed and the contribution of the unseen
//! ones is reduced to a single low-dimensional integral evaluated
//! numerically; and the classical super-population data-augmentation
//! construction, included as a baseline. Two model families are supported:
//! a logit-normal detection model (Gauss-Hermite quadrature for the
//! integral) and a spatially explicit capture-recapture model with
//! half-normal detection (habitat-mask summation).
//!
//! Modules:
//! * [`model`] — capture data, survey geometry, parameter states, priors;
//! * [`integrate`] — quadrature rules, mask summation and brute-force
//!   oracles for the probability of never being observed;
//! * [`likelihood`] — log densities for all model forms and priors;
//! * [`samplers`] — the four MCMC samplers with reproducible seeding;
//! * [`diagnostics`] — effective sample size, PSRF, posterior summaries;
//! * [`cli`] — config files, data I/O, trace persistence, run reports.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod integrate;
pub mod likelihood;
pub mod model;
pub mod samplers;

pub use error::{Error, Result};
