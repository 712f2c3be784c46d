//! Analytics for noisy stance-labelled tweet streams.
//!
//! The pipeline runs from [`ingest`] (parsing and indexing records) through
//! [`cohort`] and [`classify`] (noise-aware per-user probabilities),
//! [`dynamics`] and [`ccm`] (stance-change time series and convergent cross
//! mapping), to [`topics`] and [`threads`] (content and cascade accounting).
//! [`syngen`] produces synthetic streams with known ground truth.

mod binomial;
pub mod ccm;
pub mod classify;
pub mod cohort;
pub mod dynamics;
pub mod error;
pub mod ingest;
pub mod syngen;
pub mod threads;
pub mod topics;

pub use error::{Error, Result};
