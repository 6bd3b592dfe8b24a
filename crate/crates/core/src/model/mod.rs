//! The spatiotemporal autoencoder: layout configuration, forward/backward
//! passes and the checkpoint container.

mod autoencoder;
mod checkpoint;
mod config;

pub use autoencoder::{reconstruction_loss, AeGrads, ForwardCache, LayerParams, SpatioTemporalAE, VideoVolume};
pub use checkpoint::Checkpoint;
pub use config::{ConvLayerConfig, ModelConfig, SizeTrace, TemporalLayerConfig};
