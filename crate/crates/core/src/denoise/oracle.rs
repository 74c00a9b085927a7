//! Ground-truth-aware denoisers for exercising the sampler.

use super::{Denoiser, View};
use crate::pose::flip_pose3d;
use crate::schedule::SignalScale;
use crate::{Error, PoseSeq2D, PoseSeq3D, Result, RngStream, Skeleton};

/// Ground truth in normalized units, optionally with its mirrored copy for
/// the flipped branch.
#[derive(Debug, Clone)]
pub struct OracleTarget {
    original: PoseSeq3D,
    flipped: Option<PoseSeq3D>,
    scale: SignalScale,
}

impl OracleTarget {
    pub fn new(gt_mm: &PoseSeq3D, scale: SignalScale) -> Self {
        Self {
            original: scale.encode(gt_mm),
            flipped: None,
            scale,
        }
    }

    pub fn with_flip(mut self, skeleton: &Skeleton) -> Result<Self> {
        self.flipped = Some(flip_pose3d(&self.original, skeleton)?);
        Ok(self)
    }

    fn view(&self, view: View, y_t: &PoseSeq3D) -> Result<&PoseSeq3D> {
        let gt = match view {
            View::Original => &self.original,
            View::Flipped => self.flipped.as_ref().ok_or_else(|| {
                Error::InvalidArgument("oracle was built without a skeleton for flipping".into())
            })?,
        };
        y_t.check_shape(gt, "oracle input")?;
        Ok(gt)
    }
}

/// Returns the ground truth regardless of input.
#[derive(Debug, Clone)]
pub struct PerfectOracle {
    target: OracleTarget,
}

impl PerfectOracle {
    pub fn new(target: OracleTarget) -> Self {
        Self { target }
    }
}

impl Denoiser for PerfectOracle {
    fn predict(&self, y_t: &PoseSeq3D, _x: &PoseSeq2D, _t: usize, view: View, _rng: &mut RngStream) -> Result<PoseSeq3D> {
        Ok(self.target.view(view, y_t)?.clone())
    }
}

/// `lambda * gt + (1 - lambda) * y_t`: pulls the current state part of the
/// way towards the ground truth.
#[derive(Debug, Clone)]
pub struct ContractiveOracle {
    target: OracleTarget,
    lambda: f64,
}

impl ContractiveOracle {
    pub fn new(target: OracleTarget, lambda: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::InvalidArgument(format!(
                "contraction factor must lie in [0, 1), got {lambda}"
            )));
        }
        Ok(Self { target, lambda })
    }
}

impl Denoiser for ContractiveOracle {
    fn predict(&self, y_t: &PoseSeq3D, _x: &PoseSeq2D, _t: usize, view: View, _rng: &mut RngStream) -> Result<PoseSeq3D> {
        let gt = self.target.view(view, y_t)?;
        let l = self.lambda;
        gt.zip_with(y_t, |g, y| l * g + (1.0 - l) * y)
    }
}

/// Ground truth plus fresh isotropic Gaussian noise of a per-joint scale
/// (millimetres), drawn from the caller's stream on every call.
#[derive(Debug, Clone)]
pub struct NoisyOracle {
    target: OracleTarget,
    sigma: Vec<f64>,
}

impl NoisyOracle {
    pub fn new(target: OracleTarget, sigma_mm: Vec<f64>) -> Result<Self> {
        if sigma_mm.len() != target.original.joints() {
            return Err(Error::Shape(format!(
                "{} noise scales for {} joints",
                sigma_mm.len(),
                target.original.joints()
            )));
        }
        if sigma_mm.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument("noise scales must be non-negative".into()));
        }
        let k = target.scale.scale / 1000.0;
        let sigma = sigma_mm.iter().map(|s| s * k).collect();
        Ok(Self { target, sigma })
    }

    pub fn uniform(target: OracleTarget, sigma_mm: f64) -> Result<Self> {
        let j = target.original.joints();
        Self::new(target, vec![sigma_mm; j])
    }
}

impl Denoiser for NoisyOracle {
    fn predict(&self, y_t: &PoseSeq3D, _x: &PoseSeq2D, _t: usize, view: View, rng: &mut RngStream) -> Result<PoseSeq3D> {
        let mut out = self.target.view(view, y_t)?.clone();
        let joints = out.joints();
        for (i, p) in out.points_mut().iter_mut().enumerate() {
            let s = self.sigma[i % joints];
            for c in p.iter_mut() {
                *c += s * rng.normal();
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt() -> PoseSeq3D {
        PoseSeq3D::new(1, 3, vec![[0.0, 0.0, 4000.0], [100.0, 0.0, 4000.0], [-100.0, 20.0, 4100.0]]).unwrap()
    }

    #[test]
    fn perfect_returns_gt_at_any_t() {
        let target = OracleTarget::new(&gt(), SignalScale::default());
        let o = PerfectOracle::new(target.clone());
        let y = PoseSeq3D::zeros(1, 3);
        let x = PoseSeq2D::zeros(1, 3);
        let mut rng = RngStream::new(0, 0);
        for t in [0, 1, 500, 1000] {
            assert_eq!(&o.predict(&y, &x, t, View::Original, &mut rng).unwrap(), &target.original);
        }
        assert!(o.predict(&y, &x, 1, View::Flipped, &mut rng).is_err());
    }

    #[test]
    fn contractive_limits() {
        let target = OracleTarget::new(&gt(), SignalScale::default());
        assert!(ContractiveOracle::new(target.clone(), 1.0).is_err());
        assert!(ContractiveOracle::new(target.clone(), -0.1).is_err());
        let o = ContractiveOracle::new(target.clone(), 1.0 - 1e-9).unwrap();
        let y = PoseSeq3D::new(1, 3, vec![[1.0; 3]; 3]).unwrap();
        let out = o.predict(&y, &PoseSeq2D::zeros(1, 3), 7, View::Original, &mut RngStream::new(0, 0)).unwrap();
        for (a, b) in out.points().iter().zip(target.original.points()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn noisy_with_zero_sigma_is_perfect() {
        let target = OracleTarget::new(&gt(), SignalScale::default()).with_flip(&Skeleton::three_joint()).unwrap();
        let o = NoisyOracle::uniform(target.clone(), 0.0).unwrap();
        let p = PerfectOracle::new(target);
        let y = PoseSeq3D::zeros(1, 3);
        let x = PoseSeq2D::zeros(1, 3);
        for view in [View::Original, View::Flipped] {
            let mut rng = RngStream::new(4, 0);
            assert_eq!(
                o.predict(&y, &x, 3, view, &mut rng).unwrap(),
                p.predict(&y, &x, 3, view, &mut rng).unwrap()
            );
        }
        assert!(NoisyOracle::uniform(OracleTarget::new(&gt(), SignalScale::default()), -1.0).is_err());
    }

    #[test]
    fn noisy_draws_fresh_noise() {
        let target = OracleTarget::new(&gt(), SignalScale::default());
        let o = NoisyOracle::uniform(target, 20.0).unwrap();
        let y = PoseSeq3D::zeros(1, 3);
        let x = PoseSeq2D::zeros(1, 3);
        let mut rng = RngStream::new(4, 0);
        let a = o.predict(&y, &x, 3, View::Original, &mut rng).unwrap();
        let b = o.predict(&y, &x, 3, View::Original, &mut rng).unwrap();
        assert_ne!(a, b);
    }
}
