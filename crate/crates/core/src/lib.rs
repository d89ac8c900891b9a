//! A small CPU deep-learning engine and the NaimishNet facial keypoint
//! pipeline built on it.
//!
//! The engine ([`tensor`], [`nn`], [`optim`]) implements exactly the layers
//! NaimishNet needs, with hand-written backward passes that are checked against
//! central finite differences. The pipeline ([`data`], [`train`], [`eval`])
//! reads the Kaggle facial keypoints files, trains one network per keypoint
//! with early stopping and best-weights checkpointing, and writes submissions.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod nn;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Rng, Scalar, Tensor};
