//! ntklab: a numerical laboratory for wide deep ReLU networks trained with
//! gradient descent, and the tangent-feature (linearized) model class built
//! at initialization.
//!
//! The crate provides deterministic data generation, exact backpropagation,
//! full-batch and online stochastic training loops, tangent random feature
//! extraction and projected fitting, linearization-quality probes, margin
//! and separability analyses, and the experiment drivers behind the CLI.

pub mod container;
pub mod data;
pub mod error;
pub mod losses;
pub mod matrix;
pub mod network;
pub mod ntrf;
pub mod probes;
pub mod rng;
pub mod separability;
pub mod trainer;

pub use data::LabeledDataset;
pub use error::{Error, Result};
pub use losses::DatasetMetrics;
pub use network::{forward, init_weights, NetworkShape, WeightStack};
pub use rng::Rng;
