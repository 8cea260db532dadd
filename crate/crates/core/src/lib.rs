//! MLP-Mixer temporal link prediction.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: chronological event store and neighbor queries.
//! - [`time_encoding`]: fixed `cos(tω)` encoding and the trainable `cos(tw + b)` variant.
//! - [`tensor`]: dense kernels with hand-written backward passes, Adam, gradient checking,
//!   checkpoints.
//! - [`model`]: link token matrices, the one-layer mixer, node encoder, classifier and the
//!   attention encoders used for ablations.
//! - [`train`]: batching, loss, metrics, the training loop and instrumentation
//!   (trajectories, loss landscapes, synthetic probes).
//! - [`cli`]: config files and subcommands behind the `tgmixer` binary.

pub mod cli;
pub mod error;
pub mod graph;
pub mod model;
pub mod par;
pub mod rng;
pub mod tensor;
pub mod time_encoding;
pub mod train;

pub use error::{Error, Result};
