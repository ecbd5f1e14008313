//! Small fixed-architecture networks with hand-written backward passes.
//!
//! Everything here is `f64` and batch-major: a batch is an `Array2` with one
//! row per sample.

mod adam;
mod categorical;
pub mod checkpoint;
mod init;
mod mlp;
mod normalize;

pub use adam::{clip_grad_norm, grad_norm, AdamConfig, AdamState};
pub use categorical::Categorical;
pub use mlp::{Activation, Mlp, MlpSpec, ParameterBlock, Tape};
pub use normalize::RunningMeanStd;
