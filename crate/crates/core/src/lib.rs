//! Simulator and analysis toolkit for sign- and ternary-compressed
//! distributed SGD under data heterogeneity.
//!
//! The crate provides:
//! - worker-side gradient compressors (magnitude-driven sparsified sign,
//!   deterministic/scaled/noisy sign, multi-level stochastic quantization,
//!   shared-max ternarization) in [`compressors`];
//! - server-side majority-vote and error-feedback aggregation in
//!   [`aggregation`];
//! - communication-cost accounting with Golomb index coding in [`coding`];
//! - desk-scale heterogeneous objectives (scaled Rosenbrock, quadratics,
//!   Dirichlet-partitioned synthetic classification) in [`objectives`];
//! - the two training loops with per-round metric capture in [`simulation`];
//! - closed-form bounds and exact enumeration oracles for the
//!   wrong-aggregation probability in [`analysis`];
//! - an experiment runner with a JSON config schema and CSV output in
//!   [`experiment`], exposed through the `sparsign` CLI.

pub mod aggregation;
pub mod analysis;
pub mod coding;
pub mod compressors;
pub mod error;
pub mod experiment;
pub mod message;
pub mod objectives;
pub mod rng;
pub mod simulation;
pub mod vector;

pub use error::{Error, Result};
pub use message::{CompressedMessage, QuantizedMessage, TernaryMessage};
pub use rng::{RngStream, StreamId, StreamPurpose};
pub use vector::{sign_of, CompressionBudget, DenseVector};
