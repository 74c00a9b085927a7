//! The denoiser contract `(y_t, x, t) -> y0_hat` and its implementations.
//!
//! All denoisers work in normalized diffusion units (see
//! [`SignalScale`](crate::schedule::SignalScale)).

mod checkpoint;
mod embed;
mod mlp;
mod oracle;
mod train;

use serde::{Deserialize, Serialize};

use crate::schedule::NoiseSchedule;
use crate::{Error, HypothesisSet, PoseSeq2D, PoseSeq3D, Result, RngStream};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader};
pub use embed::{timestep_embed, TimestepEmbedding};
pub use mlp::{grad_loss, DenoiserParams, KeypointNorm, MlpDenoiser, MlpShape, Sample};
pub use oracle::{ContractiveOracle, NoisyOracle, OracleTarget, PerfectOracle};
pub use train::{init_params, train, AdamW, TrainConfig, TrainItem, TrainOutcome};

/// What the network regresses: the clean pose or the injected noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionTarget {
    #[default]
    PredictY0,
    PredictEps,
}

/// Whether the denoiser is looking at the original or the horizontally
/// flipped branch of a flip-augmented sampler.
///
/// Learned denoisers ignore this. Oracle denoisers use it to return the
/// ground truth in the frame of the branch they were called from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Original,
    Flipped,
}

pub trait Denoiser: Sync {
    /// Estimates the clean pose from one noisy hypothesis.
    ///
    /// `rng` is the calling hypothesis' stream; deterministic denoisers never
    /// touch it.
    fn predict(
        &self,
        y_t: &PoseSeq3D,
        x: &PoseSeq2D,
        t: usize,
        view: View,
        rng: &mut RngStream,
    ) -> Result<PoseSeq3D>;
}

/// `y0 = (y_t - sqrt(1 - ab_t) * eps) / sqrt(ab_t)`.
pub fn eps_to_y0(y_t: &PoseSeq3D, eps: &PoseSeq3D, t: usize, schedule: &NoiseSchedule) -> Result<PoseSeq3D> {
    schedule.check_t(t)?;
    let ab = schedule.alpha_bar(t);
    let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
    y_t.zip_with(eps, |y, e| (y - n * e) / s)
}

/// `eps = (y_t - sqrt(ab_t) * y0) / sqrt(1 - ab_t)`; undefined at `t = 0`.
pub fn y0_to_eps(y_t: &PoseSeq3D, y0: &PoseSeq3D, t: usize, schedule: &NoiseSchedule) -> Result<PoseSeq3D> {
    schedule.check_t(t)?;
    if t == 0 {
        return Err(Error::InvalidArgument("noise is undefined at t = 0".into()));
    }
    let ab = schedule.alpha_bar(t);
    let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
    y_t.zip_with(y0, |y, c| (y - s * c) / n)
}

/// Runs the MLP denoiser over every hypothesis.
pub fn denoise(
    y_t: &HypothesisSet,
    x: &PoseSeq2D,
    t: usize,
    model: &DenoiserParams,
    schedule: &NoiseSchedule,
) -> Result<HypothesisSet> {
    let d = MlpDenoiser::new(model, schedule)?;
    let out = y_t
        .iter()
        .map(|y| d.estimate(y, x, t))
        .collect::<Result<Vec<_>>>()?;
    HypothesisSet::new(out)
}

/// Mean of squared elementwise differences.
pub fn mean_squared_error(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "mean squared error of {} vs {} values",
            pred.len(),
            target.len()
        )));
    }
    let sum: f64 = pred.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(sum / pred.len() as f64)
}

/// Mean squared difference over hypotheses, frames, joints and coordinates.
pub fn loss_mse(pred: &HypothesisSet, gt: &PoseSeq3D) -> Result<f64> {
    let target: Vec<f64> = gt.points().iter().flatten().copied().collect();
    let mut total = 0.0;
    for p in pred {
        p.check_shape(gt, "loss_mse")?;
        let values: Vec<f64> = p.points().iter().flatten().copied().collect();
        total += mean_squared_error(&values, &target)?;
    }
    Ok(total / pred.len() as f64)
}
