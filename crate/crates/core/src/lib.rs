//! Verification laboratory for two-view redundancy bounds.
//!
//! The crate builds small synthetic two-view models whose probabilistic
//! oracles are exact, trains contrastive scorers against them, assembles
//! landmark and factorized embeddings, and measures downstream linear
//! prediction risk, so that every approximation bound in the accompanying
//! experiment harness can be checked against ground truth rather than
//! against another estimate.
//!
//! Layers, bottom to top:
//!
//! * [`models`]: the generative families (finite hidden state, two-token
//!   topic, Gaussian single factor) with exact sampling and oracles.
//! * [`contrastive`]: real-vs-shuffled pair classification losses and small
//!   trainers that recover the density ratio g* from data.
//! * [`embeddings`]: landmark, exactly factorized, and hidden-sample
//!   embeddings, with the linear read-out weights each construction carries.
//! * [`downstream`]: ridge / minimum-norm linear fits and risk reports.
//! * [`bounds`]: every bound and identity under test, evaluated with exact
//!   inputs and compared against measured quantities.

pub mod bounds;
pub mod contrastive;
pub mod downstream;
pub mod embeddings;
pub mod error;
pub mod models;
pub mod numerics;

pub use error::{Error, Result};
