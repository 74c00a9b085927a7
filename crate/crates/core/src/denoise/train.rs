//! Training loop: sample a timestep, diffuse the scaled ground truth,
//! regress the clean pose (or the noise), and update with AdamW.

use serde::{Deserialize, Serialize};

use super::{grad_loss, DenoiserParams, MlpShape, RegressionTarget, Sample};
use crate::schedule::{NoiseSchedule, SignalScale};
use crate::{Error, PoseSeq2D, PoseSeq3D, Result, RngStream};

/// Adaptive moments with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u32,
}

impl AdamW {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn update(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in theta.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * *p);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 4,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.1,
            seed: 0,
        }
    }
}

/// One training sequence: 2D keypoints and the matching 3D ground truth (mm).
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub x: PoseSeq2D,
    pub y0: PoseSeq3D,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: DenoiserParams,
    /// Batch loss before each update, in normalized units.
    pub loss_history: Vec<f64>,
}

impl TrainOutcome {
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, l) in self.loss_history.iter().enumerate() {
            out.push_str(&format!("{i},{l:e}\n"));
        }
        out
    }
}

/// Glorot initialisation from the `init` stream of `seed`.
pub fn init_params(shape: MlpShape, seed: u64) -> Result<DenoiserParams> {
    DenoiserParams::init(shape, &mut RngStream::named(seed, "init", 0))
}

pub fn train(
    initial: DenoiserParams,
    data: &[TrainItem],
    schedule: &NoiseSchedule,
    scale: SignalScale,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let joints = initial.shape().joints;
    let mut frames: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for item in data {
        if item.x.joints() != joints || item.y0.joints() != joints || item.x.frames() != item.y0.frames() {
            return Err(Error::Shape(format!(
                "training item {}x{} / {}x{} does not match a {joints}-joint model",
                item.x.frames(),
                item.x.joints(),
                item.y0.frames(),
                item.y0.joints()
            )));
        }
        let y0 = scale.encode(&item.y0);
        for f in 0..y0.frames() {
            frames.push((
                item.x.frame(f).iter().flatten().copied().collect(),
                y0.frame(f).iter().flatten().copied().collect(),
            ));
        }
    }
    if frames.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }

    let target_mode = initial.shape().target;
    let mut params = initial;
    let mut opt = AdamW::new(
        params.theta().len(),
        config.lr,
        config.beta1,
        config.beta2,
        config.eps,
        config.weight_decay,
    );
    let mut order_rng = RngStream::named(config.seed, "train-order", 0);
    let mut noise_rng = RngStream::named(config.seed, "train-noise", 0);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut loss_history = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let mut batch = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size.min(frames.len()) {
            if cursor == order.len() {
                order = order_rng.permutation(frames.len());
                cursor = 0;
            }
            let (x, y0) = &frames[order[cursor]];
            cursor += 1;
            let t = noise_rng.uniform_int(1, schedule.t_max());
            let eps = noise_rng.normal_vec(y0.len());
            let ab = schedule.alpha_bar(t);
            let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
            let y_t = y0.iter().zip(&eps).map(|(y, e)| s * y + n * e).collect();
            let target = match target_mode {
                RegressionTarget::PredictY0 => y0.clone(),
                RegressionTarget::PredictEps => eps,
            };
            batch.push(Sample {
                y_t,
                x: x.clone(),
                t,
                target,
            });
        }
        let (loss, grad) = match grad_loss(&params, &batch) {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => {
                return Err(Error::TrainingDiverged { step, loss: f64::NAN })
            }
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged { step, loss });
        }
        loss_history.push(loss);
        opt.update(params.theta_mut(), &grad);
    }
    Ok(TrainOutcome {
        params,
        loss_history,
    })
}
