//! Two-classifier cell-image diagnosis engine.
//!
//! The main classifier is a compact CNN that consumes stain-deconvolved
//! optical-density images through a trainable per-pixel deconvolution and a
//! 2-D DCT sparsification layer, ending in a bilinear-pooling head. An
//! RBF-kernel SVM acts as the auxiliary classifier on spectral-averaged
//! feature maps of the same backbone. At test time the CNN prediction stands
//! only when its top class probability exceeds a user-set confidence
//! threshold; otherwise the auxiliary classifier decides. Training runs as a
//! subject-level k-fold ensemble whose final prediction is a majority vote.
//!
//! The crate is organized as a library; see `examples/` for one runnable
//! program per capability and `src/main.rs` for the thin batch CLI.

pub mod app;
pub mod backbone;
pub mod data;
pub mod error;
pub mod frontend;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod report;
pub mod svm;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
