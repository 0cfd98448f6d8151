//! Neural-dictionary embeddings of point-cloud signals and DeepONet-style
//! operators trained on them.

pub mod error;
pub mod inr;
pub mod json;
pub mod metrics;
pub mod baselines;
pub mod datagen;
pub mod dictionary;
pub mod numerics;
pub mod operator;

pub use error::{Result, RinoError};
