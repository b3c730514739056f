//! Process matrices, quantum instruments and the trace rule for joint
//! probabilities across regions, with the supporting checks and oracles.

pub mod channels;
pub mod error;
pub mod gleason;
pub mod process;
pub mod random;
pub mod sampler;
pub mod superop;
pub mod tensor;

pub use error::{Error, Result};
