//! Cosine noise schedule, closed-form forward diffusion and signal scaling.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, PoseSeq3D, Result};

const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;

/// Per-timestep variance tables indexed by `t` in `0..=t_max`.
///
/// `beta[0]` is zero so that `alpha_bar[0] == 1`; for `t >= 1`,
/// `alpha_bar[t] == alpha_bar[t - 1] * alpha[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    t_max: usize,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Cosine schedule with offset `s = 0.008` and betas clipped at 0.999.
    pub fn cosine(t_max: usize) -> Result<Self> {
        if t_max < 2 {
            return Err(Error::InvalidArgument(format!(
                "schedule needs at least 2 timesteps, got {t_max}"
            )));
        }
        let f = |t: usize| {
            let phase =
                (t as f64 / t_max as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * FRAC_PI_2;
            phase.cos().powi(2)
        };
        let mut beta = Vec::with_capacity(t_max + 1);
        beta.push(0.0);
        for t in 1..=t_max {
            beta.push((1.0 - f(t) / f(t - 1)).min(MAX_BETA));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(t_max + 1);
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        Ok(Self {
            t_max,
            beta,
            alpha,
            alpha_bar,
        })
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub(crate) fn check_t(&self, t: usize) -> Result<()> {
        if t > self.t_max {
            Err(Error::InvalidArgument(format!(
                "timestep {t} outside 0..={}",
                self.t_max
            )))
        } else {
            Ok(())
        }
    }

    /// `t,beta,alpha,alpha_bar` rows for every timestep.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,beta,alpha,alpha_bar\n");
        for t in 0..=self.t_max {
            writeln!(
                out,
                "{t},{:e},{:e},{:e}",
                self.beta[t], self.alpha[t], self.alpha_bar[t]
            )
            .unwrap();
        }
        out
    }
}

/// `sqrt(alpha_bar_t) * y0 + sqrt(1 - alpha_bar_t) * eps`, elementwise.
pub fn diffuse(
    y0: &PoseSeq3D,
    t: usize,
    schedule: &NoiseSchedule,
    eps: &PoseSeq3D,
) -> Result<PoseSeq3D> {
    schedule.check_t(t)?;
    y0.check_shape(eps, "diffuse noise")?;
    let ab = schedule.alpha_bar(t);
    let (signal, noise) = (ab.sqrt(), (1.0 - ab).sqrt());
    y0.zip_with(eps, |y, e| signal * y + noise * e)
}

fn check_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && scale.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "signal scale must be positive, got {scale}"
        )))
    }
}

pub fn scale_signal(y0: &PoseSeq3D, scale: f64) -> Result<PoseSeq3D> {
    check_scale(scale)?;
    Ok(y0.map(|c| c * scale))
}

pub fn unscale_signal(y: &PoseSeq3D, scale: f64) -> Result<PoseSeq3D> {
    check_scale(scale)?;
    Ok(y.map(|c| c / scale))
}

/// Conversion between camera-space millimetres and the diffusion domain:
/// millimetres are converted to metres, then multiplied by `scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalScale {
    pub scale: f64,
}

impl Default for SignalScale {
    fn default() -> Self {
        Self { scale: 2.0 }
    }
}

impl SignalScale {
    pub fn new(scale: f64) -> Result<Self> {
        check_scale(scale)?;
        Ok(Self { scale })
    }

    pub fn encode(&self, mm: &PoseSeq3D) -> PoseSeq3D {
        let s = self.scale;
        mm.map(|c| c / 1000.0 * s)
    }

    pub fn decode(&self, normalized: &PoseSeq3D) -> PoseSeq3D {
        let s = self.scale;
        normalized.map(|c| c / s * 1000.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RngStream;

    fn pose(data: Vec<[f64; 3]>) -> PoseSeq3D {
        let j = data.len();
        PoseSeq3D::new(1, j, data).unwrap()
    }

    #[test]
    fn cosine_endpoints() {
        let s = NoiseSchedule::cosine(1000).unwrap();
        assert_eq!(s.alpha_bar(0), 1.0);
        assert!(s.alpha_bar(1000) < 1e-3);
        for t in 1..=1000 {
            assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0);
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            let rel = (s.alpha_bar(t) - s.alpha_bar(t - 1) * s.alpha(t)).abs() / s.alpha_bar(t);
            assert!(rel <= 1e-12);
        }
        assert!(NoiseSchedule::cosine(1).is_err());
    }

    #[test]
    fn alpha_bar_midpoint() {
        // f(500)/f(0) evaluated with mpmath at 30 digits.
        let s = NoiseSchedule::cosine(1000).unwrap();
        assert!((s.alpha_bar(500) - 0.494).abs() < 1e-3);
        assert!((s.alpha_bar(500) - 0.493_843_590_440_637_7).abs() < 1e-12);
    }

    #[test]
    fn diffuse_special_cases() {
        let s = NoiseSchedule::cosine(100).unwrap();
        let y0 = pose(vec![[1.0, -2.0, 3.0], [0.5, 0.0, 4.0]]);
        let zero = PoseSeq3D::zeros(1, 2);
        let out = diffuse(&y0, 40, &s, &zero).unwrap();
        let k = s.alpha_bar(40).sqrt();
        for (a, b) in out.points().iter().zip(y0.points()) {
            for c in 0..3 {
                assert_eq!(a[c], k * b[c]);
            }
        }
        let eps = pose(vec![[9.0; 3], [7.0; 3]]);
        assert_eq!(diffuse(&y0, 0, &s, &eps).unwrap(), y0);
        assert!(diffuse(&y0, 101, &s, &eps).is_err());
        assert!(diffuse(&y0, 1, &s, &PoseSeq3D::zeros(1, 3)).is_err());
    }

    #[test]
    fn diffuse_is_affine() {
        let s = NoiseSchedule::cosine(1000).unwrap();
        let mut rng = RngStream::new(11, 0);
        let mut rand_pose =
            || pose((0..5).map(|_| [rng.normal(), rng.normal(), rng.normal()]).collect());
        let (ya, yb, ea, eb) = (rand_pose(), rand_pose(), rand_pose(), rand_pose());
        let (a, b) = (0.3, -1.7);
        let comb = |p: &PoseSeq3D, q: &PoseSeq3D| p.zip_with(q, |x, y| a * x + b * y).unwrap();
        let lhs = diffuse(&comb(&ya, &yb), 321, &s, &comb(&ea, &eb)).unwrap();
        let rhs = comb(
            &diffuse(&ya, 321, &s, &ea).unwrap(),
            &diffuse(&yb, 321, &s, &eb).unwrap(),
        );
        for (l, r) in lhs.points().iter().zip(rhs.points()) {
            for c in 0..3 {
                assert!((l[c] - r[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scaling() {
        let y = pose(vec![[1.0, -0.5, 2.0]]);
        assert_eq!(scale_signal(&y, 2.0).unwrap().points(), &[[2.0, -1.0, 4.0]]);
        assert_eq!(scale_signal(&y, 1.0).unwrap(), y);
        assert_eq!(unscale_signal(&scale_signal(&y, 2.0).unwrap(), 2.0).unwrap(), y);
        assert!(scale_signal(&y, 0.0).is_err());
        assert!(unscale_signal(&y, -1.0).is_err());
        let mm = pose(vec![[1000.0, -500.0, 4000.0]]);
        let sig = SignalScale::default();
        assert_eq!(sig.encode(&mm).points(), &[[2.0, -1.0, 8.0]]);
        assert_eq!(sig.decode(&sig.encode(&mm)), mm);
    }
}
