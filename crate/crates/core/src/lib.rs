//! Self-supervised image denoising with a blind-spot Transformer.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensorcore`] differentiable operators (convolutions, deformable
//!   convolution, window attention, layer norm, MLP) with hand-written
//!   backward passes, the parameter store and the Adam optimizer.
//! * [`imagepipe`] exact image transforms: pixel-shuffle downsampling, Bayer
//!   packing, the global-aware blind-spot mask mapper, augmentation and
//!   synthetic noise.
//! * [`cadt`] the dual-branch transformer unit and its hierarchical stack.
//! * [`sne`] the secondary noise extractor.
//! * [`model`] end-to-end assembly and checkpoint I/O.
//! * [`trainer`] blind-spot loss, learning-rate schedule and training loop.
//! * [`metrics`] PSNR / SSIM and report emission.
//! * [`gradsuite`] finite-difference checks of every backward pass.

#[macro_use]
pub mod error;

pub mod cadt;
pub mod gradsuite;
pub mod imagepipe;
pub mod metrics;
pub mod model;
pub mod sne;
pub mod tensorcore;
pub mod trainer;

pub use error::{Error, Result};
