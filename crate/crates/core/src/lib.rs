//! Global interactive pattern learning for interpretable graph classification.
//!
//! Input graphs are coarsened by a learned soft clustering, matched against
//! learnable prototype graphs ("interactive patterns") with a random-walk
//! kernel, and classified from the resulting similarity scores. The learned
//! patterns double as class-level explanations.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below are what the CLI and the test suites use.

pub mod autodiff;
pub mod checkpoint;
pub mod cluster;
pub mod config;
pub mod encoder;
pub mod error;
pub mod explain;
pub mod graph;
pub mod kernel;
pub mod metrics;
pub mod model;
pub mod patterns;
pub mod probe;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use autodiff::{Gradients, Tape, Var};
pub use error::{GipError, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tape64 = Tape<f64>;
pub type Graph64 = graph::AttributedGraph<f64>;
pub type Dataset64 = graph::GraphDataset<f64>;
