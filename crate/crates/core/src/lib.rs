//! Self-imitation reinforcement learning with episode-ranked replay,
//! prioritized and filtered sampling, and diversity-preserving buffers on
//! procedurally generated sparse-reward gridworlds.

pub mod error;
pub mod gridworld;
pub mod harness;
pub mod intrinsic;
pub mod policy;
pub mod replay;
pub mod sampling;
pub mod scoring;
pub mod trainer;

pub use error::{Error, Result};
