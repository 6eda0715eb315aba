//! Vision-Mamba U-Net segmentation with dual self-distillation.
//!
//! The crate provides the full stack needed to train and evaluate the model
//! on CPU at desk scale: a deterministic f64 autodiff tape, the selective
//! scan and VSS block, the U-shaped network with its feature pyramid, the
//! projection and progressive self-distillation losses, segmentation
//! objectives and metrics, a synthetic dataset generator, and the training /
//! evaluation / ablation / complexity engine.

pub mod data;
pub mod distill;
pub mod engine;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod network;
pub mod objectives;
pub mod params;
pub mod rng;
pub mod ssm;
pub mod tensor;

pub use error::{Error, Result};
