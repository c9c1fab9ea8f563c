pub mod checkpoint;
pub mod dataset;
pub mod diagnostics;
pub mod embeddings;
pub mod error;
pub mod experiments;
pub mod fixtures;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod textpipe;
pub mod trainer;

pub use error::{Error, Result};
