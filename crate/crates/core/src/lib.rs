//! Multi-modal encoder-decoder transformers for TCR-pMHC binding
//! prediction, built on a small reverse-mode autodiff engine, together
//! with attention-based explanation metrics and a training harness that
//! can select checkpoints by explanation quality.

pub mod blocks;
pub mod data;
pub mod error;
pub mod losses;
pub mod tensor;
pub mod train;
pub mod xai;
pub mod zoo;

pub use error::{Error, Result};
