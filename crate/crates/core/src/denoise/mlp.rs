//! Per-frame MLP denoiser with hand-written reverse-mode gradients.
//!
//! Input per frame is the concatenation, joint by joint, of the noisy 3D
//! position and the normalized 2D keypoint (`J * 5` values). The sinusoidal
//! timestep embedding is added to the first hidden pre-activation. Hidden
//! layers use `tanh`; the output layer is linear with `J * 3` values.

use serde::{Deserialize, Serialize};

use super::{timestep_embed, Denoiser, RegressionTarget, View};
use crate::schedule::NoiseSchedule;
use crate::{Error, PoseSeq2D, PoseSeq3D, Result, RngStream};

/// Maps pixel keypoints to roughly unit range: `(uv - center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeypointNorm {
    pub center: [f64; 2],
    pub scale: f64,
}

impl Default for KeypointNorm {
    fn default() -> Self {
        Self {
            center: [500.0, 500.0],
            scale: 500.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpShape {
    pub joints: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub target: RegressionTarget,
    pub keypoint_norm: KeypointNorm,
}

impl MlpShape {
    pub fn new(joints: usize, hidden_width: usize, hidden_layers: usize, target: RegressionTarget) -> Self {
        Self {
            joints,
            hidden_width,
            hidden_layers,
            target,
            keypoint_norm: KeypointNorm::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints == 0 || self.hidden_layers == 0 {
            return Err(Error::InvalidArgument(
                "MLP needs at least one joint and one hidden layer".into(),
            ));
        }
        if self.hidden_width < 2 || !self.hidden_width.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "hidden width doubles as the timestep embedding size and must be even, got {}",
                self.hidden_width
            )));
        }
        if self.keypoint_norm.scale.is_nan() || self.keypoint_norm.scale <= 0.0 {
            return Err(Error::InvalidArgument("keypoint scale must be positive".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.joints * 5
    }

    pub fn output_dim(&self) -> usize {
        self.joints * 3
    }

    pub fn embed_dim(&self) -> usize {
        self.hidden_width
    }

    /// `(fan_out, fan_in)` of every dense layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.input_dim();
        for _ in 0..self.hidden_layers {
            dims.push((self.hidden_width, fan_in));
            fan_in = self.hidden_width;
        }
        dims.push((self.output_dim(), fan_in));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(o, i)| o * i + o).sum()
    }
}

/// MLP weights as one flat vector: for each layer, the row-major
/// `fan_out x fan_in` weight matrix followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    shape: MlpShape,
    theta: Vec<f64>,
}

/// One training or evaluation frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Noisy pose, `J * 3` normalized values.
    pub y_t: Vec<f64>,
    /// 2D keypoints, `J * 2` pixels.
    pub x: Vec<f64>,
    pub t: usize,
    /// Regression target, `J * 3` values (clean pose or noise).
    pub target: Vec<f64>,
}

struct Trace {
    input: Vec<f64>,
    /// Post-activation of every hidden layer.
    hidden: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl DenoiserParams {
    pub fn zeros(shape: MlpShape) -> Result<Self> {
        shape.validate()?;
        let n = shape.param_count();
        Ok(Self {
            shape,
            theta: vec![0.0; n],
        })
    }

    /// Glorot-uniform weights and zero biases drawn from `rng`.
    pub fn init(shape: MlpShape, rng: &mut RngStream) -> Result<Self> {
        let mut p = Self::zeros(shape)?;
        let mut offset = 0;
        for (o, i) in p.shape.layer_dims() {
            let limit = (6.0 / (o + i) as f64).sqrt();
            for w in &mut p.theta[offset..offset + o * i] {
                *w = rng.uniform_range(-limit, limit);
            }
            offset += o * i + o;
        }
        Ok(p)
    }

    pub fn from_parts(shape: MlpShape, theta: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if theta.len() != shape.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                shape.param_count(),
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("parameters must be finite".into()));
        }
        Ok(Self { shape, theta })
    }

    pub fn shape(&self) -> &MlpShape {
        &self.shape
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// `(offset, fan_out, fan_in)` of each layer within `theta`.
    pub fn layer_offsets(&self) -> Vec<(usize, usize, usize)> {
        let mut offset = 0;
        self.shape
            .layer_dims()
            .into_iter()
            .map(|(o, i)| {
                let start = offset;
                offset += o * i + o;
                (start, o, i)
            })
            .collect()
    }

    fn build_input(&self, y_t: &[f64], x: &[f64]) -> Vec<f64> {
        let norm = self.shape.keypoint_norm;
        let mut input = Vec::with_capacity(self.shape.input_dim());
        for (p, k) in y_t.chunks_exact(3).zip(x.chunks_exact(2)) {
            input.extend_from_slice(p);
            input.push((k[0] - norm.center[0]) / norm.scale);
            input.push((k[1] - norm.center[1]) / norm.scale);
        }
        input
    }

    fn forward_trace(&self, y_t: &[f64], x: &[f64], t: usize) -> Result<Trace> {
        let input = self.build_input(y_t, x);
        let embed = timestep_embed(t, self.shape.embed_dim())?;
        let layers = self.layer_offsets();
        let mut hidden = Vec::with_capacity(layers.len() - 1);
        let mut output = Vec::new();
        for (l, &(offset, fan_out, fan_in)) in layers.iter().enumerate() {
            let a = if l == 0 { &input } else { &hidden[l - 1] };
            let w = &self.theta[offset..offset + fan_out * fan_in];
            let b = &self.theta[offset + fan_out * fan_in..offset + fan_out * fan_in + fan_out];
            let mut z: Vec<f64> = w
                .chunks_exact(fan_in)
                .zip(b)
                .map(|(row, bias)| row.iter().zip(a).map(|(wi, ai)| wi * ai).sum::<f64>() + bias)
                .collect();
            if l == 0 {
                for (zi, e) in z.iter_mut().zip(embed.values()) {
                    *zi += e;
                }
            }
            if l + 1 < layers.len() {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: l });
            }
            if l + 1 < layers.len() {
                hidden.push(z);
            } else {
                output = z;
            }
        }
        Ok(Trace {
            input,
            hidden,
            output,
        })
    }

    /// Raw network output for one frame (`J * 3` values).
    pub fn forward(&self, y_t: &[f64], x: &[f64], t: usize) -> Result<Vec<f64>> {
        if y_t.len() != self.shape.output_dim() || x.len() != self.shape.joints * 2 {
            return Err(Error::Shape(format!(
                "model expects {} joints, got {} values and {} keypoint values",
                self.shape.joints,
                y_t.len(),
                x.len()
            )));
        }
        Ok(self.forward_trace(y_t, x, t)?.output)
    }
}

/// Mean squared error over the batch and its gradient with respect to every
/// parameter, in the same flat layout as [`DenoiserParams::theta`].
pub fn grad_loss(params: &DenoiserParams, batch: &[Sample]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let shape = params.shape();
    let layers = params.layer_offsets();
    let n_out = shape.output_dim();
    let denom = (batch.len() * n_out) as f64;
    let mut grad = vec![0.0; params.theta.len()];
    let mut loss = 0.0;
    for sample in batch {
        if sample.target.len() != n_out || sample.y_t.len() != n_out || sample.x.len() != shape.joints * 2 {
            return Err(Error::Shape("sample does not match model joint count".into()));
        }
        let trace = params.forward_trace(&sample.y_t, &sample.x, sample.t)?;
        let mut delta: Vec<f64> = trace
            .output
            .iter()
            .zip(&sample.target)
            .map(|(o, y)| {
                loss += (o - y).powi(2);
                2.0 * (o - y) / denom
            })
            .collect();
        for l in (0..layers.len()).rev() {
            let (offset, fan_out, fan_in) = layers[l];
            let a = if l == 0 { &trace.input } else { &trace.hidden[l - 1] };
            for (r, d) in delta.iter().enumerate() {
                let row = &mut grad[offset + r * fan_in..offset + (r + 1) * fan_in];
                for (g, ai) in row.iter_mut().zip(a) {
                    *g += d * ai;
                }
                grad[offset + fan_out * fan_in + r] += d;
            }
            if l == 0 {
                break;
            }
            let w = &params.theta[offset..offset + fan_out * fan_in];
            let mut prev = vec![0.0; fan_in];
            for (row, d) in w.chunks_exact(fan_in).zip(&delta) {
                for (p, wi) in prev.iter_mut().zip(row) {
                    *p += wi * d;
                }
            }
            for (p, h) in prev.iter_mut().zip(a) {
                *p *= 1.0 - h * h;
            }
            delta = prev;
        }
    }
    Ok((loss / denom, grad))
}

/// [`DenoiserParams`] bound to a schedule, usable as a [`Denoiser`].
#[derive(Debug, Clone, Copy)]
pub struct MlpDenoiser<'a> {
    params: &'a DenoiserParams,
    schedule: &'a NoiseSchedule,
}

impl<'a> MlpDenoiser<'a> {
    pub fn new(params: &'a DenoiserParams, schedule: &'a NoiseSchedule) -> Result<Self> {
        Ok(Self { params, schedule })
    }

    /// Clean-pose estimate for every frame, converting a noise prediction
    /// when the model regresses noise.
    pub fn estimate(&self, y_t: &PoseSeq3D, x: &PoseSeq2D, t: usize) -> Result<PoseSeq3D> {
        let joints = self.params.shape().joints;
        if y_t.joints() != joints || x.joints() != joints || y_t.frames() != x.frames() {
            return Err(Error::Shape(format!(
                "noisy pose {}x{}, keypoints {}x{}, model expects {joints} joints",
                y_t.frames(),
                y_t.joints(),
                x.frames(),
                x.joints()
            )));
        }
        self.schedule.check_t(t)?;
        let mut out = Vec::with_capacity(y_t.points().len());
        for f in 0..y_t.frames() {
            let yf: Vec<f64> = y_t.frame(f).iter().flatten().copied().collect();
            let xf: Vec<f64> = x.frame(f).iter().flatten().copied().collect();
            let raw = self.params.forward(&yf, &xf, t)?;
            out.extend(raw.chunks_exact(3).map(|c| [c[0], c[1], c[2]]));
        }
        let raw = PoseSeq3D::new(y_t.frames(), joints, out)?;
        match self.params.shape().target {
            RegressionTarget::PredictY0 => Ok(raw),
            RegressionTarget::PredictEps => super::eps_to_y0(y_t, &raw, t, self.schedule),
        }
    }
}

impl Denoiser for MlpDenoiser<'_> {
    fn predict(&self, y_t: &PoseSeq3D, x: &PoseSeq2D, t: usize, _view: View, _rng: &mut RngStream) -> Result<PoseSeq3D> {
        self.estimate(y_t, x, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(target: RegressionTarget) -> MlpShape {
        MlpShape::new(3, 8, 2, target)
    }

    fn random_sample(rng: &mut RngStream, joints: usize) -> Sample {
        Sample {
            y_t: rng.normal_vec(joints * 3),
            x: (0..joints * 2).map(|_| rng.uniform_range(0.0, 1000.0)).collect(),
            t: rng.uniform_int(1, 1000),
            target: rng.normal_vec(joints * 3),
        }
    }

    #[test]
    fn zero_weights_output_bias() {
        let mut p = DenoiserParams::zeros(shape(RegressionTarget::PredictY0)).unwrap();
        let (offset, o, i) = *p.layer_offsets().last().unwrap();
        for (k, b) in p.theta_mut()[offset + o * i..].iter_mut().enumerate() {
            *b = k as f64 * 0.5;
        }
        let mut rng = RngStream::new(1, 0);
        for _ in 0..3 {
            let s = random_sample(&mut rng, 3);
            let out = p.forward(&s.y_t, &s.x, s.t).unwrap();
            assert_eq!(out, (0..9).map(|k| k as f64 * 0.5).collect::<Vec<_>>());
        }
    }

    #[test]
    fn zero_model_zero_input_has_zero_weight_gradients() {
        let p = DenoiserParams::zeros(shape(RegressionTarget::PredictY0)).unwrap();
        let norm = p.shape().keypoint_norm;
        let batch = vec![Sample {
            y_t: vec![0.0; 9],
            x: [norm.center; 3].concat(),
            t: 0,
            target: vec![1.0; 9],
        }];
        let (_, grad) = grad_loss(&p, &batch).unwrap();
        for (offset, o, i) in p.layer_offsets() {
            assert!(grad[offset..offset + o * i].iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn duplicated_sample_has_same_gradient() {
        let mut rng = RngStream::new(5, 0);
        let p = DenoiserParams::init(shape(RegressionTarget::PredictY0), &mut rng).unwrap();
        let s = random_sample(&mut rng, 3);
        let (l1, g1) = grad_loss(&p, std::slice::from_ref(&s)).unwrap();
        let (l2, g2) = grad_loss(&p, &[s.clone(), s]).unwrap();
        assert!((l1 - l2).abs() <= 1e-15 * l1.abs());
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn non_finite_activation_reports_layer() {
        let mut p = DenoiserParams::zeros(shape(RegressionTarget::PredictY0)).unwrap();
        let (offset, o, i) = *p.layer_offsets().last().unwrap();
        p.theta_mut()[offset + o * i] = f64::INFINITY;
        let err = p.forward(&[0.0; 9], &[0.0; 6], 1).unwrap_err();
        assert!(matches!(err, Error::NonFinite { layer: 2 }));
    }

    #[test]
    fn rejects_odd_width() {
        assert!(DenoiserParams::zeros(MlpShape::new(3, 7, 2, RegressionTarget::PredictY0)).is_err());
    }

    #[test]
    fn estimate_checks_shapes() {
        let s = NoiseSchedule::cosine(100).unwrap();
        let p = DenoiserParams::zeros(shape(RegressionTarget::PredictY0)).unwrap();
        let d = MlpDenoiser::new(&p, &s).unwrap();
        let y = PoseSeq3D::zeros(2, 3);
        assert!(d.estimate(&y, &PoseSeq2D::zeros(1, 3), 5).is_err());
        assert!(d.estimate(&PoseSeq3D::zeros(2, 4), &PoseSeq2D::zeros(2, 4), 5).is_err());
        assert!(d.estimate(&y, &PoseSeq2D::zeros(2, 3), 5).is_ok());
    }
}
