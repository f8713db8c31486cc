//! Numerical core for contrastive federated semi-supervised intrusion
//! detection on tabular network traffic.
//!
//! The crate is `no_std` and only needs an allocator. Everything that
//! touches files, threads or clocks lives in the `fedssl` companion crate.
//!
//! Layout:
//! * [`labels`], [`features`], [`partition`]: NSL-KDD taxonomy, record
//!   encoding and server/client splits.
//! * [`augment`]: weak/strong noise views forming positive pairs.
//! * [`model`]: the lightweight 1D CNN encoder, projection head and
//!   classifier with hand-written backward passes.
//! * [`losses`], [`optim`]: objectives with analytic gradients, Adam/SGD.
//! * [`federation`], [`baselines`]: per-round client and server phases.
//! * [`metrics`]: confusion matrices and weighted scores.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod augment;
pub mod baselines;
mod error;
pub mod features;
pub mod federation;
pub mod labels;
pub mod losses;
mod math;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod partition;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
