//! Pinhole and distorted-pinhole reprojection.
//!
//! The distorted model uses
//!
//! ```text
//! r^2 = X'^2 + Y'^2
//! d_r = 1 + k1 r^2 + k2 r^4 + k3 r^6
//! d_t = 2 p1 X'^2 + 2 p2 Y'^2
//! X_d = X' (d_r + d_t) + p1 r^2
//! Y_d = Y' (d_r + d_t) + p2 r^2
//! ```
//!
//! Note that the tangential terms differ from the Brown-Conrady form used by
//! OpenCV. This module reproduces the formula above as written and does not
//! interoperate with OpenCV distortion coefficients.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::{Error, PoseSeq2D, PoseSeq3D, Result};

/// Depths at or below this value (mm) are treated as behind the camera.
pub const DEFAULT_Z_MIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraModel {
    Pinhole,
    Distorted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraJson", into = "CameraJson")]
pub struct CameraIntrinsics {
    model: CameraModel,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub p1: f64,
    pub p2: f64,
}

#[derive(Serialize, Deserialize)]
struct CameraJson {
    model: CameraModel,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    #[serde(default)]
    k1: f64,
    #[serde(default)]
    k2: f64,
    #[serde(default)]
    k3: f64,
    #[serde(default)]
    p1: f64,
    #[serde(default)]
    p2: f64,
}

impl TryFrom<CameraJson> for CameraIntrinsics {
    type Error = Error;

    fn try_from(c: CameraJson) -> Result<Self> {
        match c.model {
            CameraModel::Pinhole => {
                if [c.k1, c.k2, c.k3, c.p1, c.p2].iter().any(|&k| k != 0.0) {
                    return Err(Error::InvalidArgument(
                        "pinhole camera must have zero distortion coefficients".into(),
                    ));
                }
                CameraIntrinsics::pinhole(c.fx, c.fy, c.cx, c.cy)
            }
            CameraModel::Distorted => {
                CameraIntrinsics::distorted(c.fx, c.fy, c.cx, c.cy, [c.k1, c.k2, c.k3], [c.p1, c.p2])
            }
        }
    }
}

impl From<CameraIntrinsics> for CameraJson {
    fn from(c: CameraIntrinsics) -> Self {
        CameraJson {
            model: c.model,
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            k1: c.k1,
            k2: c.k2,
            k3: c.k3,
            p1: c.p1,
            p2: c.p2,
        }
    }
}

fn check_focal(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<()> {
    if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "focal lengths must be positive, got fx = {fx}, fy = {fy}"
        )));
    }
    if !(cx.is_finite() && cy.is_finite()) {
        return Err(Error::InvalidArgument("principal point must be finite".into()));
    }
    Ok(())
}

impl CameraIntrinsics {
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        check_focal(fx, fy, cx, cy)?;
        Ok(Self {
            model: CameraModel::Pinhole,
            fx,
            fy,
            cx,
            cy,
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            p1: 0.0,
            p2: 0.0,
        })
    }

    /// Distorted pinhole with radial `[k1, k2, k3]` and tangential `[p1, p2]`.
    pub fn distorted(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        radial: [f64; 3],
        tangential: [f64; 2],
    ) -> Result<Self> {
        check_focal(fx, fy, cx, cy)?;
        if radial.iter().chain(&tangential).any(|k| !k.is_finite()) {
            return Err(Error::InvalidArgument(
                "distortion coefficients must be finite".into(),
            ));
        }
        Ok(Self {
            model: CameraModel::Distorted,
            fx,
            fy,
            cx,
            cy,
            k1: radial[0],
            k2: radial[1],
            k3: radial[2],
            p1: tangential[0],
            p2: tangential[1],
        })
    }

    pub fn model(&self) -> CameraModel {
        self.model
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    /// Projects a point with no depth check. Callers guarantee `z > 0`.
    pub fn project_unchecked(&self, p: [f64; 3]) -> [f64; 2] {
        let xn = p[0] / p[2];
        let yn = p[1] / p[2];
        match self.model {
            CameraModel::Pinhole => [self.fx * xn + self.cx, self.fy * yn + self.cy],
            CameraModel::Distorted => {
                let r2 = xn * xn + yn * yn;
                let radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2 + self.k3 * r2 * r2 * r2;
                let tangential = 2.0 * self.p1 * xn * xn + 2.0 * self.p2 * yn * yn;
                let xd = xn * (radial + tangential) + self.p1 * r2;
                let yd = yn * (radial + tangential) + self.p2 * r2;
                [self.fx * xd + self.cx, self.fy * yd + self.cy]
            }
        }
    }

    /// Projects a single point, failing when `z <= z_min`.
    pub fn project_point(&self, p: [f64; 3], z_min: f64) -> Option<[f64; 2]> {
        (p[2] > z_min).then(|| self.project_unchecked(p))
    }

    /// Pinhole back-projection of pixel `(u, v)` to depth `z`.
    pub fn ray_point(&self, u: f64, v: f64, z: f64) -> Result<[f64; 3]> {
        if self.model != CameraModel::Pinhole {
            return Err(Error::InvalidArgument(
                "ray_point requires the pinhole model".into(),
            ));
        }
        if z.is_nan() || z <= 0.0 {
            return Err(Error::InvalidArgument(format!("depth must be positive, got {z}")));
        }
        Ok([(u - self.cx) / self.fx * z, (v - self.cy) / self.fy * z, z])
    }
}

/// Projects every joint with the default depth guard.
pub fn project(p: &PoseSeq3D, cam: &CameraIntrinsics) -> Result<PoseSeq2D> {
    project_with_guard(p, cam, DEFAULT_Z_MIN)
}

pub fn project_with_guard(p: &PoseSeq3D, cam: &CameraIntrinsics, z_min: f64) -> Result<PoseSeq2D> {
    p.check_camera_valid(z_min)?;
    PoseSeq2D::new(
        p.frames(),
        p.joints(),
        p.points().iter().map(|&q| cam.project_unchecked(q)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::pinhole(1000.0, 1000.0, 500.0, 500.0).unwrap()
    }

    #[test]
    fn pinhole_substitution() {
        let p = PoseSeq3D::new(1, 1, vec![[1.0, 2.0, 5.0]]).unwrap();
        assert_eq!(project(&p, &cam()).unwrap().points(), &[[700.0, 900.0]]);
    }

    #[test]
    fn radial_worked_example() {
        // X' = Y' = 0.1, k1 = 0.1: r^2 = 0.02, d_r = 1.002, u = 1000 * 0.1002 + 500.
        let c = CameraIntrinsics::distorted(1000.0, 1000.0, 500.0, 500.0, [0.1, 0.0, 0.0], [0.0; 2]).unwrap();
        assert!(c.project_point([0.1, 0.1, 1.0], DEFAULT_Z_MIN).is_none());
        let uv = c.project_point([1.0, 1.0, 10.0], DEFAULT_Z_MIN).unwrap();
        assert!((uv[0] - 600.2).abs() < 1e-9);
        assert!((uv[1] - 600.2).abs() < 1e-9);
    }

    #[test]
    fn zero_distortion_matches_pinhole_bitwise() {
        let d = CameraIntrinsics::distorted(1000.0, 900.0, 512.0, 480.0, [0.0; 3], [0.0; 2]).unwrap();
        let p = CameraIntrinsics::pinhole(1000.0, 900.0, 512.0, 480.0).unwrap();
        for q in [[1.0, 2.0, 5.0], [-300.0, 250.0, 4000.0], [0.3, -0.7, 1.5]] {
            let a = d.project_unchecked(q);
            let b = p.project_unchecked(q);
            assert_eq!(a[0].to_bits(), b[0].to_bits());
            assert_eq!(a[1].to_bits(), b[1].to_bits());
        }
    }

    #[test]
    fn behind_camera_is_reported() {
        let p = PoseSeq3D::new(2, 2, vec![[0.0, 0.0, 10.0], [0.0, 0.0, 10.0], [0.0, 0.0, 10.0], [0.0, 0.0, 0.5]]).unwrap();
        match project(&p, &cam()) {
            Err(Error::BehindCamera { frame, joint, .. }) => assert_eq!((frame, joint), (1, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ray_point_cases() {
        let c = cam();
        assert_eq!(c.ray_point(500.0, 500.0, 42.0).unwrap(), [0.0, 0.0, 42.0]);
        assert!(c.ray_point(1.0, 1.0, 0.0).is_err());
        let a = c.project_unchecked(c.ray_point(123.0, 456.0, 100.0).unwrap());
        let b = c.project_unchecked(c.ray_point(123.0, 456.0, 9000.0).unwrap());
        assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
    }

    #[test]
    fn camera_json() {
        let text = r#"{"model":"distorted","fx":1,"fy":2,"cx":3,"cy":4,"k1":0.1,"k2":0,"k3":0,"p1":0.01,"p2":0}"#;
        let c: CameraIntrinsics = serde_json::from_str(text).unwrap();
        assert_eq!(c.model(), CameraModel::Distorted);
        let back: CameraIntrinsics = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
        let bad = r#"{"model":"pinhole","fx":1,"fy":2,"cx":3,"cy":4,"k1":0.1}"#;
        assert!(serde_json::from_str::<CameraIntrinsics>(bad).is_err());
        let bad = r#"{"model":"pinhole","fx":0,"fy":2,"cx":3,"cy":4}"#;
        assert!(serde_json::from_str::<CameraIntrinsics>(bad).is_err());
    }

    proptest! {
        #[test]
        fn ray_point_round_trip(u in 0.0f64..1000.0, v in 0.0f64..1000.0, z in 10.0f64..10_000.0) {
            let c = cam();
            let uv = c.project_unchecked(c.ray_point(u, v, z).unwrap());
            prop_assert!((uv[0] - u).abs() < 1e-9 && (uv[1] - v).abs() < 1e-9);
        }

        #[test]
        fn depth_scaling_invariance(
            x in -1000.0f64..1000.0, y in -1000.0f64..1000.0, z in 100.0f64..8000.0,
            lambda in 0.1f64..20.0,
        ) {
            let c = CameraIntrinsics::distorted(1100.0, 1050.0, 500.0, 480.0, [0.05, -0.01, 0.002], [0.001, -0.002]).unwrap();
            let a = c.project_unchecked([x, y, z]);
            let b = c.project_unchecked([lambda * x, lambda * y, lambda * z]);
            prop_assert!((a[0] - b[0]).abs() <= 1e-12 * a[0].abs().max(1.0) * 10.0);
            prop_assert!((a[1] - b[1]).abs() <= 1e-12 * a[1].abs().max(1.0) * 10.0);
        }
    }
}
