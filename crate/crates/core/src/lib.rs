//! Dual-branch graph prompt learning for cross-domain few-shot node
//! classification.
//!
//! A GCN encoder is pre-trained on a source graph and frozen. On the target
//! graph a second branch runs the same frozen layers with residual bottleneck
//! adapters; the two branch outputs are fused with a learnable weight and fed
//! to a linear classifier. Training combines cross-entropy with a
//! cross-branch structural contrastive loss and a topology-consistent fusion
//! loss. The [`theory`] module checks the estimator-fusion argument behind the
//! design numerically.

pub mod cli;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod losses;
pub mod numerics;
pub mod pretrain;
pub mod theory;
pub mod trainer;

#[cfg(test)]
mod testutil;

pub use error::{Gp2fError, Result};
