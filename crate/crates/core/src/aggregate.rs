//! Reduce a hypothesis set to a single pose.
//!
//! Selection methods break ties towards the lowest hypothesis index, and
//! every selected joint is copied bit for bit from its hypothesis.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::camera::{CameraIntrinsics, DEFAULT_Z_MIN};
use crate::metrics::{frame_error, joint_error};
use crate::{Error, HypothesisSet, PoseSeq2D, PoseSeq3D, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationReport {
    pub pose: PoseSeq3D,
    /// Chosen hypothesis per joint, frame-major. `None` for averaging.
    pub chosen: Option<Vec<usize>>,
    /// Reprojection error (pixels) of each chosen joint, for the reprojection
    /// based methods.
    pub reprojection_error: Option<Vec<f64>>,
}

impl AggregationReport {
    /// `frame,joint,hypothesis,reprojection_error_px`, with empty cells where a
    /// value does not apply.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,joint,hypothesis,reprojection_error_px\n");
        let joints = self.pose.joints();
        for i in 0..self.pose.points().len() {
            let h = self.chosen.as_ref().map(|c| c[i].to_string()).unwrap_or_default();
            let e = self.reprojection_error.as_ref().map(|r| r[i].to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{h},{e}\n", i / joints, i % joints));
        }
        out
    }
}

/// Elementwise mean of the hypotheses.
pub fn agg_average(hs: &HypothesisSet) -> PoseSeq3D {
    let first = hs.get(0);
    let mut data = first.points().to_vec();
    for h in hs.iter().skip(1) {
        for (acc, p) in data.iter_mut().zip(h.points()) {
            for k in 0..3 {
                acc[k] += p[k];
            }
        }
    }
    let n = hs.len() as f64;
    for p in &mut data {
        for c in p.iter_mut() {
            *c /= n;
        }
    }
    PoseSeq3D::new(first.frames(), first.joints(), data).expect("shape preserved")
}

fn argmin(values: impl Iterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best
}

fn pixel_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn check_2d(hs: &HypothesisSet, x: &PoseSeq2D) -> Result<()> {
    if hs.frames() != x.frames() || hs.joints() != x.joints() {
        return Err(Error::Shape(format!(
            "hypotheses are {}x{} but 2D input is {}x{}",
            hs.frames(),
            hs.joints(),
            x.frames(),
            x.joints()
        )));
    }
    Ok(())
}

/// Reprojection error of every hypothesis joint; `None` behind the camera.
fn reprojection_errors(hs: &HypothesisSet, x: &PoseSeq2D, cam: &CameraIntrinsics) -> Vec<Vec<Option<f64>>> {
    hs.iter()
        .map(|h| {
            h.points()
                .iter()
                .zip(x.points())
                .map(|(p, q)| cam.project_point(*p, DEFAULT_Z_MIN).map(|uv| pixel_distance(uv, *q)))
                .collect()
        })
        .collect()
}

fn assemble(hs: &HypothesisSet, chosen: &[usize]) -> PoseSeq3D {
    let data = chosen.iter().enumerate().map(|(i, &h)| hs.get(h).points()[i]).collect();
    PoseSeq3D::new(hs.frames(), hs.joints(), data).expect("shape preserved")
}

/// Joint-wise selection by minimum reprojection error.
pub fn agg_jpma(hs: &HypothesisSet, x: &PoseSeq2D, cam: &CameraIntrinsics) -> Result<AggregationReport> {
    check_2d(hs, x)?;
    let errs = reprojection_errors(hs, x, cam);
    let joints = hs.joints();
    let mut chosen = Vec::with_capacity(x.points().len());
    let mut residual = Vec::with_capacity(x.points().len());
    for i in 0..x.points().len() {
        let (h, e) = argmin(errs.iter().enumerate().filter_map(|(h, e)| e[i].map(|v| (h, v)))).ok_or_else(|| {
            Error::Aggregation(format!(
                "frame {} joint {}: every hypothesis is behind the camera",
                i / joints,
                i % joints
            ))
        })?;
        chosen.push(h);
        residual.push(e);
    }
    Ok(AggregationReport {
        pose: assemble(hs, &chosen),
        chosen: Some(chosen),
        reprojection_error: Some(residual),
    })
}

/// Pose-wise selection by minimum total reprojection error. A hypothesis
/// with any joint behind the camera is not eligible for that frame.
pub fn agg_ppma(hs: &HypothesisSet, x: &PoseSeq2D, cam: &CameraIntrinsics) -> Result<AggregationReport> {
    check_2d(hs, x)?;
    let errs = reprojection_errors(hs, x, cam);
    let joints = hs.joints();
    let mut chosen = Vec::with_capacity(x.points().len());
    let mut residual = Vec::with_capacity(x.points().len());
    for f in 0..x.frames() {
        let range = f * joints..(f + 1) * joints;
        let totals = errs.iter().enumerate().filter_map(|(h, e)| {
            e[range.clone()].iter().try_fold(0.0, |acc, v| v.map(|v| acc + v)).map(|s| (h, s))
        });
        let (h, _) = argmin(totals)
            .ok_or_else(|| Error::Aggregation(format!("frame {f}: no hypothesis lies fully in front of the camera")))?;
        for i in range {
            chosen.push(h);
            residual.push(errs[h][i].expect("eligible hypothesis"));
        }
    }
    Ok(AggregationReport {
        pose: assemble(hs, &chosen),
        chosen: Some(chosen),
        reprojection_error: Some(residual),
    })
}

fn check_gt(hs: &HypothesisSet, gt: &PoseSeq3D) -> Result<()> {
    hs.get(0).check_shape(gt, "ground truth")
}

/// Per frame, the hypothesis with the lowest MPJPE against `gt`.
pub fn agg_pbest(hs: &HypothesisSet, gt: &PoseSeq3D) -> Result<AggregationReport> {
    check_gt(hs, gt)?;
    let joints = gt.joints();
    let mut chosen = Vec::with_capacity(gt.points().len());
    for f in 0..gt.frames() {
        let (h, _) = argmin(hs.iter().map(|p| frame_error(p.frame(f), gt.frame(f))).enumerate())
            .expect("non-empty hypothesis set");
        chosen.extend(std::iter::repeat_n(h, joints));
    }
    Ok(AggregationReport {
        pose: assemble(hs, &chosen),
        chosen: Some(chosen),
        reprojection_error: None,
    })
}

/// Per joint, the hypothesis closest to `gt`.
pub fn agg_jbest(hs: &HypothesisSet, gt: &PoseSeq3D) -> Result<AggregationReport> {
    check_gt(hs, gt)?;
    let chosen: Vec<usize> = gt
        .points()
        .iter()
        .enumerate()
        .map(|(i, g)| {
            argmin(hs.iter().map(|p| joint_error(p.points()[i], *g)).enumerate())
                .expect("non-empty hypothesis set")
                .0
        })
        .collect();
    Ok(AggregationReport {
        pose: assemble(hs, &chosen),
        chosen: Some(chosen),
        reprojection_error: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Avg,
    Ppma,
    Jpma,
    Pbest,
    Jbest,
}

impl Aggregator {
    pub const ALL: [Aggregator; 5] = [Self::Avg, Self::Ppma, Self::Jpma, Self::Pbest, Self::Jbest];

    pub fn name(self) -> &'static str {
        match self {
            Self::Avg => "avg",
            Self::Ppma => "ppma",
            Self::Jpma => "jpma",
            Self::Pbest => "pbest",
            Self::Jbest => "jbest",
        }
    }

    /// P-Best and J-Best look at the ground truth and cannot run in deployment.
    pub fn needs_ground_truth(self) -> bool {
        matches!(self, Self::Pbest | Self::Jbest)
    }

    pub fn run(
        self,
        hs: &HypothesisSet,
        x: &PoseSeq2D,
        cam: &CameraIntrinsics,
        gt: Option<&PoseSeq3D>,
    ) -> Result<AggregationReport> {
        let need_gt = || gt.ok_or_else(|| Error::MissingGroundTruth(self.name().into()));
        match self {
            Self::Avg => Ok(AggregationReport {
                pose: agg_average(hs),
                chosen: None,
                reprojection_error: None,
            }),
            Self::Ppma => agg_ppma(hs, x, cam),
            Self::Jpma => agg_jpma(hs, x, cam),
            Self::Pbest => agg_pbest(hs, need_gt()?),
            Self::Jbest => agg_jbest(hs, need_gt()?),
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown aggregator '{s}'")))
    }
}
