//! The quantformer network and its checkpoint format.

mod checkpoint;
mod config;
mod network;
mod params;

pub use config::{AttentionScale, HeadDim, HeadDimRule, ModelConfig, ModelSettings, Pooling};
pub use network::{mse_loss, PredictionDistribution, Quantformer};
pub use params::{BlockParameters, ModelParameters};
