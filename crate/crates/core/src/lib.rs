//! Multi-robot collaborative perception with graph neural network message
//! passing.
//!
//! The crate covers the full pipeline: a deterministic reverse-mode autodiff
//! engine over dense tensors, robot communication graphs and relative poses,
//! pose-conditioned (FiLM) and cross-attention message encodings, the
//! encoder/decoder perception network with its single- and multi-robot
//! baselines, depth/segmentation losses and metrics, a ray-casting synthetic
//! dataset generator with a sensor-corruption suite, and a training /
//! evaluation / bandwidth-accounting harness.
//!
//! Numeric modules are generic over the scalar type via [`scalar::Scalar`]
//! (`f32` or `f64`); the pipeline itself runs on the `f64` aliases below.
//! Dataset files store `f32` payloads regardless.

pub mod checkpoint;
pub mod datagen;
pub mod error;
pub mod graph;
pub mod harness;
pub mod message;
pub mod model;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tasks;
pub mod tensor;
pub(crate) mod wire;

pub use error::{Error, Result};
pub use rng::RngState;

/// Scalar type the perception pipeline runs on.
pub type Real = f64;
/// Dense tensor over [`Real`].
pub type Tensor = tensor::Tensor<Real>;
/// Autodiff tape over [`Real`].
pub type Tape = tensor::Tape<Real>;
/// Named parameter store (with Adam state) over [`Real`].
pub type ParamStore = optim::ParamStore<Real>;
