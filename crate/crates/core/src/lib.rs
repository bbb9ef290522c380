pub mod data;
pub mod dsp;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod reconstruct;
pub mod swin1d;
pub mod train;

pub use error::{Error, Result};
