//! Stereo video view and time interpolation through per-scene optimized
//! coordinate decoders.

mod error;

pub mod coords;
pub mod decoder;
pub mod geometry;
pub mod pipeline;
pub mod scenegen;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
