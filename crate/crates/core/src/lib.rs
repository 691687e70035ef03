//! Attention-fused multi-expression severity classifier.
//!
//! Six per-expression feature maps are fused by channel attention, classified
//! into three severity grades and trained with a class-balanced focal loss.
//! Everything is written against plain `f64` buffers with explicit backward
//! passes, so results are bit-reproducible for a given seed.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
