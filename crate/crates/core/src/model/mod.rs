//! The style-aware hierarchical attention network.

pub mod config;
pub mod forward;
pub mod params;

pub use config::{Channel, Mode, ModelConfig};
pub use forward::{argmax, bind, forward_document, predict, Bound, ForwardOutput, Prediction};
pub use params::{Layout, ModelParams};
