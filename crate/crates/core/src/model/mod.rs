//! The reconstruction network, its ablation variants and checkpoints.

mod checkpoint;
mod config;
mod spectral;
mod xinet;

pub use checkpoint::{Checkpoint, MAGIC};
pub use config::{Variant, XiNetConfig};
pub use spectral::spectrum;
pub use xinet::{Architecture, DecoderStage, Encoder, XiNet};
