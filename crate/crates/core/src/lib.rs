//! Core engine for studying Type I error under restricted randomization in
//! finite populations.
//!
//! The crate is organized along the phases of a randomized-trial simulation:
//!
//! * [`schemes`] — randomization schemes (Simple, Complete, Fixed Block,
//!   Big Stick) as generators and exact enumerators of assignment sequences;
//! * [`population`] — finite populations of potential outcomes under sharp
//!   and non-sharp nulls, sampling without replacement, and outcome reveal;
//! * [`inference`] — the difference-in-means estimator and the four tests
//!   (randomization-based, ANOVA, ANCOVA with restriction adjustments, and
//!   the Neyman-variance Wald test), with their numerical primitives;
//! * [`harness`] — the nested Monte Carlo study over populations, samples,
//!   and sequences, with deterministic seeding and thread-count-independent
//!   results;
//! * [`seed`] — derivation of independent random streams from a master seed.

pub mod error;
pub mod harness;
pub mod inference;
pub mod population;
pub mod schemes;
pub mod seed;

pub use error::{Error, Result};
