//! Differential magnetometry with entangled two-ion sensor states.
//!
//! The crate is organised bottom-up:
//!
//! * [`physics`] holds the closed-form Zeeman relations, the dc/ac separation
//!   algebra and the ideal parity probabilities of the sensor state.
//! * [`sim`] simulates experimental cycles against a synthetic field model.
//! * [`mle`] estimates phase and contrast from a single parity outcome.
//! * [`bayes`] keeps the grid posterior over frequency and phase offset.
//! * [`design`] picks the next interrogation time by expected information gain.
//! * [`protocols`] runs whole campaigns (incremental, adaptive, dual-manifold).
//! * [`export`] writes traces, summaries and posterior snapshots.

pub mod bayes;
pub mod design;
mod error;
pub mod export;
pub mod mle;
pub mod physics;
pub mod protocols;
mod quadrature;
pub mod sim;

pub use error::{Error, Result};
