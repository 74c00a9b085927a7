//! K-iteration DDIM reverse process producing H hypotheses.
//!
//! Each hypothesis owns the stream `("sampler", h)` of the run seed, which
//! feeds its initial noise, the stochastic DDIM term and any noise an oracle
//! denoiser draws. Hypotheses therefore come out identical whether they are
//! computed serially, in parallel, or as part of a larger `H`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoise::{Denoiser, View};
use crate::pose::{flip_pose2d, flip_pose3d};
use crate::schedule::{NoiseSchedule, SignalScale};
use crate::{Error, HypothesisSet, PoseSeq2D, PoseSeq3D, Result, RngStream, Skeleton};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// `sigma_t = sqrt((1 - ab_t') / (1 - ab_t)) * sqrt(1 - ab_t / ab_t')`.
    #[default]
    Paper,
    /// `sigma_t = 0`.
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipMode {
    #[default]
    None,
    /// Two independent K-step chains (original, flipped); final outputs averaged.
    Once,
    /// Flip-denoise-flip at every iteration, averaged before the DDIM step.
    Diffusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub hypotheses: usize,
    pub iterations: usize,
    pub sigma_mode: SigmaMode,
    pub flip: FlipMode,
    pub seed: u64,
    /// Fan hypotheses out over the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            hypotheses: 20,
            iterations: 10,
            sigma_mode: SigmaMode::Paper,
            flip: FlipMode::None,
            seed: 0,
            parallel: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, t_max: usize) -> Result<()> {
        if self.hypotheses == 0 {
            return Err(Error::InvalidArgument("need at least one hypothesis".into()));
        }
        if self.iterations == 0 || self.iterations > t_max {
            return Err(Error::InvalidArgument(format!(
                "iterations must lie in 1..={t_max}, got {}",
                self.iterations
            )));
        }
        Ok(())
    }
}

/// `round(t_max * (1 - k / K))` for `k = 0..K`, ties rounded up.
pub fn timestep_ladder(t_max: usize, iterations: usize) -> Result<Vec<usize>> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be positive".into()));
    }
    if iterations > t_max {
        return Err(Error::InvalidArgument(format!(
            "{iterations} iterations exceed the {t_max} available timesteps"
        )));
    }
    Ok((0..iterations)
        .map(|k| {
            let num = t_max * (iterations - k);
            (2 * num + iterations) / (2 * iterations)
        })
        .collect())
}

/// Stochasticity of the step `t -> t_next`.
pub fn ddim_sigma(schedule: &NoiseSchedule, t: usize, t_next: usize, mode: SigmaMode) -> f64 {
    match mode {
        SigmaMode::Deterministic => 0.0,
        SigmaMode::Paper => {
            let ab = schedule.alpha_bar(t);
            let ab_next = schedule.alpha_bar(t_next);
            ((1.0 - ab_next) / (1.0 - ab)).sqrt() * (1.0 - ab / ab_next).sqrt()
        }
    }
}

/// Result of one DDIM update.
#[derive(Debug, Clone)]
pub struct DdimUpdate {
    pub y_next: PoseSeq3D,
    /// Coordinates where `1 - ab_t' - sigma_t^2` went negative and was clamped.
    pub clamped: usize,
}

/// One DDIM update for a single hypothesis.
pub fn ddim_step_single(
    y_t: &PoseSeq3D,
    y0_hat: &PoseSeq3D,
    t: usize,
    t_next: usize,
    schedule: &NoiseSchedule,
    mode: SigmaMode,
    rng: &mut RngStream,
) -> Result<DdimUpdate> {
    schedule.check_t(t)?;
    if t_next >= t {
        return Err(Error::InvalidArgument(format!(
            "DDIM step must move backwards, got {t} -> {t_next}"
        )));
    }
    y_t.check_shape(y0_hat, "ddim_step")?;
    let ab = schedule.alpha_bar(t);
    let ab_next = schedule.alpha_bar(t_next);
    let sigma = ddim_sigma(schedule, t, t_next, mode);
    let mut dir = 1.0 - ab_next - sigma * sigma;
    let mut clamped = 0;
    if dir < 0.0 {
        dir = 0.0;
        clamped = y_t.points().len() * 3;
    }
    let dir = dir.sqrt();
    let (sig_t, noise_t) = (ab.sqrt(), (1.0 - ab).sqrt());
    let sig_next = ab_next.sqrt();
    let mut out = Vec::with_capacity(y_t.points().len());
    for (y, c) in y_t.points().iter().zip(y0_hat.points()) {
        let mut p = [0.0; 3];
        for k in 0..3 {
            let eps_t = (y[k] - sig_t * c[k]) / noise_t;
            p[k] = sig_next * c[k] + dir * eps_t;
            if mode == SigmaMode::Paper {
                p[k] += sigma * rng.normal();
            }
        }
        out.push(p);
    }
    Ok(DdimUpdate {
        y_next: PoseSeq3D::new(y_t.frames(), y_t.joints(), out)?,
        clamped,
    })
}

/// DDIM update applied to every hypothesis with its own stream.
pub fn ddim_step(
    y_t: &HypothesisSet,
    y0_hat: &HypothesisSet,
    t: usize,
    t_next: usize,
    schedule: &NoiseSchedule,
    mode: SigmaMode,
    rngs: &mut [RngStream],
) -> Result<(HypothesisSet, usize)> {
    if y_t.len() != y0_hat.len() || rngs.len() != y_t.len() {
        return Err(Error::Shape(format!(
            "{} states, {} estimates, {} streams",
            y_t.len(),
            y0_hat.len(),
            rngs.len()
        )));
    }
    let mut clamped = 0;
    let mut out = Vec::with_capacity(y_t.len());
    for ((y, c), rng) in y_t.iter().zip(y0_hat).zip(rngs) {
        let u = ddim_step_single(y, c, t, t_next, schedule, mode, rng)?;
        clamped += u.clamped;
        out.push(u.y_next);
    }
    Ok((HypothesisSet::new(out)?, clamped))
}

/// Stream for hypothesis `h` of a run.
pub fn hypothesis_stream(seed: u64, h: usize) -> RngStream {
    RngStream::named(seed, "sampler", h as u64)
}

/// Sampler seed for the `index`-th input of a run, so that every input of a
/// dataset gets its own family of hypothesis streams.
pub fn pose_seed(run_seed: u64, index: usize) -> u64 {
    RngStream::named(run_seed, "pose-sampler", index as u64).next_u64()
}

fn flipped_chain_stream(seed: u64, h: usize) -> RngStream {
    RngStream::named(seed, "sampler-flipped", h as u64)
}

/// Skeleton and image width needed by the flip modes.
#[derive(Debug, Clone, Copy)]
pub struct FlipContext<'a> {
    pub skeleton: &'a Skeleton,
    pub image_width: f64,
}

#[derive(Debug, Clone)]
pub struct SampleOutput {
    /// Final clean-pose estimates in millimetres.
    pub hypotheses: HypothesisSet,
    /// Clean-pose estimate after every iteration, in millimetres.
    pub trace: Vec<HypothesisSet>,
    pub clamped: usize,
}

struct Chain {
    /// Normalized estimate after each iteration.
    estimates: Vec<PoseSeq3D>,
    clamped: usize,
}

fn average(a: &PoseSeq3D, b: &PoseSeq3D) -> Result<PoseSeq3D> {
    a.zip_with(b, |p, q| 0.5 * (p + q))
}

fn initial_noise(x: &PoseSeq2D, rng: &mut RngStream) -> Result<PoseSeq3D> {
    let n = x.frames() * x.joints();
    let pts = (0..n).map(|_| [rng.normal(), rng.normal(), rng.normal()]).collect();
    PoseSeq3D::new(x.frames(), x.joints(), pts)
}

#[derive(Clone, Copy)]
struct Run<'a> {
    schedule: &'a NoiseSchedule,
    config: &'a SamplerConfig,
    ladder: &'a [usize],
}

impl Run<'_> {
    /// A plain chain, in either the original or the flipped frame.
    fn chain(&self, x: &PoseSeq2D, denoiser: &dyn Denoiser, view: View, rng: &mut RngStream) -> Result<Chain> {
        let mut y = initial_noise(x, rng)?;
        let mut estimates = Vec::with_capacity(self.ladder.len());
        let mut clamped = 0;
        for (k, &t) in self.ladder.iter().enumerate() {
            let y0 = denoiser.predict(&y, x, t, view, rng)?;
            if let Some(&t_next) = self.ladder.get(k + 1) {
                let u = ddim_step_single(&y, &y0, t, t_next, self.schedule, self.config.sigma_mode, rng)?;
                y = u.y_next;
                clamped += u.clamped;
            }
            estimates.push(y0);
        }
        Ok(Chain { estimates, clamped })
    }

    /// Flip-denoise-flip at every iteration.
    fn diffusion_flip_chain(
        &self,
        x: &PoseSeq2D,
        x_flipped: &PoseSeq2D,
        denoiser: &dyn Denoiser,
        skeleton: &Skeleton,
        rng: &mut RngStream,
    ) -> Result<Chain> {
        let mut y = initial_noise(x, rng)?;
        let mut estimates = Vec::with_capacity(self.ladder.len());
        let mut clamped = 0;
        for (k, &t) in self.ladder.iter().enumerate() {
            let direct = denoiser.predict(&y, x, t, View::Original, rng)?;
            let y_flipped = flip_pose3d(&y, skeleton)?;
            let mirrored = denoiser.predict(&y_flipped, x_flipped, t, View::Flipped, rng)?;
            let y0 = average(&direct, &flip_pose3d(&mirrored, skeleton)?)?;
            if let Some(&t_next) = self.ladder.get(k + 1) {
                let u = ddim_step_single(&y, &y0, t, t_next, self.schedule, self.config.sigma_mode, rng)?;
                y = u.y_next;
                clamped += u.clamped;
            }
            estimates.push(y0);
        }
        Ok(Chain { estimates, clamped })
    }

    fn hypothesis(
        &self,
        h: usize,
        x: &PoseSeq2D,
        x_flipped: Option<&PoseSeq2D>,
        denoiser: &dyn Denoiser,
        flip: Option<FlipContext<'_>>,
    ) -> Result<Chain> {
        let seed = self.config.seed;
        let mut rng = hypothesis_stream(seed, h);
        match (self.config.flip, flip, x_flipped) {
            (FlipMode::None, _, _) => self.chain(x, denoiser, View::Original, &mut rng),
            (FlipMode::Diffusion, Some(ctx), Some(xf)) => {
                self.diffusion_flip_chain(x, xf, denoiser, ctx.skeleton, &mut rng)
            }
            (FlipMode::Once, Some(ctx), Some(xf)) => {
                let direct = self.chain(x, denoiser, View::Original, &mut rng)?;
                let mut rng_f = flipped_chain_stream(seed, h);
                let mirrored = self.chain(xf, denoiser, View::Flipped, &mut rng_f)?;
                let estimates = direct
                    .estimates
                    .iter()
                    .zip(&mirrored.estimates)
                    .map(|(a, b)| average(a, &flip_pose3d(b, ctx.skeleton)?))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Chain {
                    estimates,
                    clamped: direct.clamped + mirrored.clamped,
                })
            }
            _ => Err(Error::InvalidArgument(
                "flip augmentation needs a skeleton and image width".into(),
            )),
        }
    }
}

/// Full sampler with optional flip augmentation and per-iteration trace.
pub fn sample_traced(
    x: &PoseSeq2D,
    denoiser: &dyn Denoiser,
    config: &SamplerConfig,
    schedule: &NoiseSchedule,
    scale: SignalScale,
    flip: Option<FlipContext<'_>>,
) -> Result<SampleOutput> {
    config.validate(schedule.t_max())?;
    let ladder = timestep_ladder(schedule.t_max(), config.iterations)?;
    let x_flipped = match (config.flip, flip) {
        (FlipMode::None, _) => None,
        (_, None) => {
            return Err(Error::InvalidArgument(
                "flip augmentation needs a skeleton and image width".into(),
            ))
        }
        (_, Some(ctx)) => {
            if ctx.skeleton.mirror_pairs().is_empty() {
                return Err(Error::InvalidArgument(
                    "flip augmentation needs a skeleton with mirror pairs".into(),
                ));
            }
            Some(flip_pose2d(x, ctx.skeleton, ctx.image_width)?)
        }
    };
    let run = Run {
        schedule,
        config,
        ladder: &ladder,
    };
    let one = |h: usize| run.hypothesis(h, x, x_flipped.as_ref(), denoiser, flip);
    let chains: Vec<Chain> = if config.parallel {
        (0..config.hypotheses).into_par_iter().map(one).collect::<Result<_>>()?
    } else {
        (0..config.hypotheses).map(one).collect::<Result<_>>()?
    };

    let clamped = chains.iter().map(|c| c.clamped).sum();
    let trace = (0..ladder.len())
        .map(|k| HypothesisSet::new(chains.iter().map(|c| scale.decode(&c.estimates[k])).collect()))
        .collect::<Result<Vec<_>>>()?;
    let hypotheses = trace.last().cloned().expect("ladder is non-empty");
    Ok(SampleOutput {
        hypotheses,
        trace,
        clamped,
    })
}

/// Samples `config.hypotheses` poses for `x`. Flip augmentation must be off.
pub fn sample(
    x: &PoseSeq2D,
    denoiser: &dyn Denoiser,
    config: &SamplerConfig,
    schedule: &NoiseSchedule,
    scale: SignalScale,
) -> Result<HypothesisSet> {
    Ok(sample_traced(x, denoiser, config, schedule, scale, None)?.hypotheses)
}

/// Samples with the configured flip mode; `FlipMode::None` behaves like [`sample`].
pub fn sample_flipped(
    x: &PoseSeq2D,
    denoiser: &dyn Denoiser,
    config: &SamplerConfig,
    schedule: &NoiseSchedule,
    scale: SignalScale,
    skeleton: &Skeleton,
    image_width: f64,
) -> Result<HypothesisSet> {
    let ctx = FlipContext {
        skeleton,
        image_width,
    };
    Ok(sample_traced(x, denoiser, config, schedule, scale, Some(ctx))?.hypotheses)
}
