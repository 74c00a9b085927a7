//! Diffusion-based multi-hypothesis 3D human pose lifting.
//!
//! The crate is organised around the inference pipeline:
//!
//! - [`skeleton`], [`pose`], [`rng`], [`posefile`]: shared domain types,
//!   the seeded stream contract and the JSON Lines pose format.
//! - [`schedule`]: cosine noise schedule and the closed-form forward process.
//! - [`denoise`]: the denoiser contract, oracle denoisers, and a small MLP
//!   denoiser with analytic gradients and an AdamW training loop.
//! - [`sampler`]: the K-step DDIM reverse process producing H hypotheses,
//!   with optional flip augmentation.
//! - [`camera`]: pinhole and distorted-pinhole reprojection.
//! - [`aggregate`]: averaging, pose/joint-level reprojection selection and
//!   the ground-truth oracle selections.
//! - [`metrics`]: MPJPE, P-MPJPE, PCK and AUC.
//! - [`synth`]: synthetic skeletons, poses and hypothesis clouds.

pub mod aggregate;
pub mod camera;
pub mod denoise;
mod error;
pub mod metrics;
pub mod pose;
pub mod posefile;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod skeleton;
pub mod synth;

pub use error::{Error, Result};
pub use pose::{HypothesisSet, PoseSeq2D, PoseSeq3D};
pub use rng::RngStream;
pub use skeleton::Skeleton;
