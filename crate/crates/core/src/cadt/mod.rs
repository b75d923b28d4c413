//! Dual-branch transformer units and the residual stack built from them.
//!
//! Parameter names follow `group{g}.unit{u}.{global|local}.{layer}`, plus
//! `head.*` and `tail.*` for the embedding and output convolutions.

mod encoder;
mod layers;
mod lfe;
mod stack;
mod unit;

pub use encoder::{attention_weights, Encoder, EncoderCache};
pub use layers::{Conv, Deform, DeformCache, Mlp, Norm, KERNEL};
pub use lfe::{Lfe, LfeCache};
pub use stack::{CadtStack, StackCache, StackConfig};
pub use unit::{CadtCache, CadtUnit};
