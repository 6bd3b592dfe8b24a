//! Spatiotemporal convolutional autoencoder for unsupervised video anomaly
//! detection.
//!
//! Frames are preprocessed and stacked into fixed-length volumes, a
//! convolutional encoder / ConvLSTM / deconvolutional decoder learns to
//! reconstruct volumes of normal motion, and per-frame reconstruction error
//! becomes a regularity score whose dips are grouped into events.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root pin the 64-bit build used by the CLI.

pub mod error;
pub mod model;
pub mod optim;
pub mod params;
pub mod pipeline;
pub mod recurrent;
pub mod scalar;
pub mod scoring;
pub mod tensor;

pub use error::{Error, Result};
pub use params::Parameters;
pub use scalar::Scalar;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Model = model::SpatioTemporalAE<f64>;
pub type Model32 = model::SpatioTemporalAE<f32>;
pub type Volume = model::VideoVolume<f64>;
pub type Frames = pipeline::FrameSequence<f64>;
pub type Stats = pipeline::PreprocessStats<f64>;
pub type Checkpoint = model::Checkpoint<f64>;
