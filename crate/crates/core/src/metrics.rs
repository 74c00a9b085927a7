//! MPJPE, P-MPJPE, PCK and AUC.
//!
//! Sequence-level errors are the mean over frames of per-frame means, so a
//! pose that is no worse than another on every joint is never reported as
//! worse after rounding.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, PoseSeq3D, Result};

/// Default PCK threshold (mm).
pub const PCK_THRESHOLD: f64 = 150.0;

/// AUC threshold grid: 0, 5, ..., 150 mm.
pub fn auc_thresholds() -> Vec<f64> {
    (0..=30).map(|i| 5.0 * i as f64).collect()
}

/// Euclidean distance between two joints.
pub fn joint_error(a: [f64; 3], b: [f64; 3]) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Mean joint error of a single frame.
pub fn frame_error(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> f64 {
    let sum: f64 = pred.iter().zip(gt).map(|(a, b)| joint_error(*a, *b)).sum();
    sum / gt.len() as f64
}

fn check(pred: &PoseSeq3D, gt: &PoseSeq3D) -> Result<()> {
    pred.check_shape(gt, "metric")?;
    if gt.frames() == 0 || gt.joints() == 0 {
        return Err(Error::Shape("metrics need at least one joint".into()));
    }
    Ok(())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Per-joint errors in frame-major order.
pub fn joint_errors(pred: &PoseSeq3D, gt: &PoseSeq3D) -> Result<Vec<f64>> {
    check(pred, gt)?;
    Ok(pred.points().iter().zip(gt.points()).map(|(a, b)| joint_error(*a, *b)).collect())
}

pub fn mpjpe_per_frame(pred: &PoseSeq3D, gt: &PoseSeq3D) -> Result<Vec<f64>> {
    check(pred, gt)?;
    Ok((0..gt.frames()).map(|f| frame_error(pred.frame(f), gt.frame(f))).collect())
}

pub fn mpjpe(pred: &PoseSeq3D, gt: &PoseSeq3D) -> Result<f64> {
    Ok(mean(&mpjpe_per_frame(pred, gt)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// Rotation, translation and uniform scale.
    #[default]
    Similarity,
    /// Rotation and translation only.
    Rigid,
}

fn centroid(points: &[[f64; 3]]) -> Vector3<f64> {
    let sum = points.iter().fold(Vector3::zeros(), |acc, p| acc + Vector3::from(*p));
    sum / points.len() as f64
}

fn is_collinear(centered: &[Vector3<f64>]) -> bool {
    let cov: Matrix3<f64> = centered.iter().map(|p| p * p.transpose()).sum();
    let mut sv: Vec<f64> = cov.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv[0] == 0.0 || sv[1] <= 1e-12 * sv[0]
}

/// Aligns one predicted frame to the ground truth by orthogonal Procrustes
/// with a proper rotation.
pub fn procrustes_align(pred: &[[f64; 3]], gt: &[[f64; 3]], mode: Alignment) -> Option<Vec<[f64; 3]>> {
    let (mu_p, mu_g) = (centroid(pred), centroid(gt));
    let p: Vec<Vector3<f64>> = pred.iter().map(|x| Vector3::from(*x) - mu_p).collect();
    let g: Vec<Vector3<f64>> = gt.iter().map(|x| Vector3::from(*x) - mu_g).collect();
    if is_collinear(&p) || is_collinear(&g) {
        return None;
    }
    // Cross-covariance H = sum p g^T = U S V^T; R = V D U^T maps p onto g.
    let h: Matrix3<f64> = p.iter().zip(&g).map(|(a, b)| a * b.transpose()).sum();
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let v = v_t.transpose();
    let d = if (v * u.transpose()).determinant() < 0.0 { -1.0 } else { 1.0 };
    let dm = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let r = v * dm * u.transpose();
    let s = match mode {
        Alignment::Rigid => 1.0,
        Alignment::Similarity => {
            let sv = svd.singular_values;
            let norm: f64 = p.iter().map(|x| x.norm_squared()).sum();
            (sv[0] + sv[1] + d * sv[2]) / norm
        }
    };
    Some(p.iter().map(|x| (s * (r * x) + mu_g).into()).collect())
}

pub fn pmpjpe_per_frame(pred: &PoseSeq3D, gt: &PoseSeq3D, mode: Alignment) -> Result<Vec<f64>> {
    check(pred, gt)?;
    (0..gt.frames())
        .map(|f| {
            let aligned = procrustes_align(pred.frame(f), gt.frame(f), mode)
                .ok_or(Error::AlignmentDegenerate { frame: f })?;
            // The identity is a feasible alignment, so the optimum never
            // exceeds the unaligned error; this guards against rounding.
            Ok(frame_error(&aligned, gt.frame(f)).min(frame_error(pred.frame(f), gt.frame(f))))
        })
        .collect()
}

pub fn pmpjpe(pred: &PoseSeq3D, gt: &PoseSeq3D, mode: Alignment) -> Result<f64> {
    Ok(mean(&pmpjpe_per_frame(pred, gt, mode)?))
}

fn pck_of(errors: &[f64], threshold: f64) -> f64 {
    let hits = errors.iter().filter(|&&e| e < threshold || e == 0.0).count();
    hits as f64 / errors.len() as f64
}

/// Fraction of joints with error below `threshold` (mm).
pub fn pck(pred: &PoseSeq3D, gt: &PoseSeq3D, threshold: f64) -> Result<f64> {
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(Error::InvalidArgument(format!("PCK threshold must be positive, got {threshold}")));
    }
    Ok(pck_of(&joint_errors(pred, gt)?, threshold))
}

/// Mean PCK over [`auc_thresholds`]. At the zero threshold only exact
/// matches count.
pub fn auc(pred: &PoseSeq3D, gt: &PoseSeq3D) -> Result<f64> {
    let errors = joint_errors(pred, gt)?;
    Ok(mean(&auc_thresholds().iter().map(|&t| pck_of(&errors, t)).collect::<Vec<_>>()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub mpjpe: f64,
    pub pmpjpe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mpjpe: f64,
    pub pmpjpe: f64,
    pub pck: f64,
    pub auc: f64,
    pub per_frame: Vec<FrameMetrics>,
}

impl MetricReport {
    pub fn evaluate(pred: &PoseSeq3D, gt: &PoseSeq3D, mode: Alignment) -> Result<Self> {
        let m = mpjpe_per_frame(pred, gt)?;
        let p = pmpjpe_per_frame(pred, gt, mode)?;
        Ok(Self {
            mpjpe: mean(&m),
            pmpjpe: mean(&p),
            pck: pck(pred, gt, PCK_THRESHOLD)?,
            auc: auc(pred, gt)?,
            per_frame: m.into_iter().zip(p).map(|(mpjpe, pmpjpe)| FrameMetrics { mpjpe, pmpjpe }).collect(),
        })
    }
}

/// One row of the metric table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub method: String,
    pub hypotheses: usize,
    pub iterations: usize,
    pub report: MetricReport,
}

pub const METRIC_CSV_HEADER: &str = "method,H,K,mpjpe_mm,pmpjpe_mm,pck150,auc";

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = format!("{METRIC_CSV_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.method, r.hypotheses, r.iterations, r.report.mpjpe, r.report.pmpjpe, r.report.pck, r.report.auc
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RngStream;
    use proptest::prelude::*;

    fn random_pose(rng: &mut RngStream, joints: usize) -> PoseSeq3D {
        PoseSeq3D::new(
            1,
            joints,
            (0..joints)
                .map(|_| [rng.normal() * 300.0, rng.normal() * 300.0, 4000.0 + rng.normal() * 300.0])
                .collect(),
        )
        .unwrap()
    }

    fn rotation(rng: &mut RngStream) -> Matrix3<f64> {
        let axis = Vector3::new(rng.normal(), rng.normal(), rng.normal()).normalize();
        let angle = rng.uniform_range(-3.0, 3.0);
        *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix()
    }

    fn transform(p: &PoseSeq3D, r: Matrix3<f64>, s: f64, t: Vector3<f64>) -> PoseSeq3D {
        PoseSeq3D::new(
            p.frames(),
            p.joints(),
            p.points().iter().map(|x| (s * (r * Vector3::from(*x)) + t).into()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn mpjpe_cases() {
        let gt = PoseSeq3D::new(1, 2, vec![[0.0; 3], [1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(mpjpe(&gt, &gt).unwrap(), 0.0);
        assert_eq!(mpjpe(&gt.map_points(|p| [p[0] + 3.0, p[1], p[2]]), &gt).unwrap(), 3.0);
        let pred = PoseSeq3D::new(1, 2, vec![[0.0; 3], [1.0, 2.0, 13.0]]).unwrap();
        assert_eq!(mpjpe(&pred, &gt).unwrap(), 5.0);
        assert!(mpjpe(&PoseSeq3D::zeros(1, 3), &gt).is_err());
    }

    #[test]
    fn pmpjpe_absorbs_similarity() {
        let mut rng = RngStream::new(11, 0);
        for _ in 0..50 {
            let gt = random_pose(&mut rng, 17);
            let r = rotation(&mut rng);
            let t = Vector3::new(rng.normal(), rng.normal(), rng.normal()) * 500.0;
            let s = rng.uniform_range(0.5, 2.0);
            let pred = transform(&gt, r, s, t);
            assert!(pmpjpe(&pred, &gt, Alignment::Similarity).unwrap() < 1e-9);
            let rigid = transform(&gt, r, 1.0, t);
            assert!(pmpjpe(&rigid, &gt, Alignment::Rigid).unwrap() < 1e-9);
        }
        let gt = random_pose(&mut rng, 5);
        assert!(pmpjpe(&gt.map(|c| 2.0 * c), &gt, Alignment::Similarity).unwrap() < 1e-9);
        assert!(pmpjpe(&gt.map(|c| 2.0 * c), &gt, Alignment::Rigid).unwrap() > 1.0);
    }

    #[test]
    fn reflections_are_not_absorbed() {
        let mut rng = RngStream::new(12, 0);
        let gt = random_pose(&mut rng, 8);
        let mirror = gt.map_points(|p| [-p[0], p[1], p[2]]);
        assert!(pmpjpe(&mirror, &gt, Alignment::Similarity).unwrap() > 1.0);
    }

    #[test]
    fn collinear_is_degenerate() {
        let line = PoseSeq3D::new(1, 3, vec![[0.0; 3], [1.0, 1.0, 1.0], [2.0, 2.0, 2.0]]).unwrap();
        let ok = PoseSeq3D::new(1, 3, vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        assert!(matches!(
            pmpjpe(&line, &ok, Alignment::Similarity),
            Err(Error::AlignmentDegenerate { frame: 0 })
        ));
    }

    #[test]
    fn pck_and_auc_cases() {
        let gt = PoseSeq3D::new(1, 2, vec![[0.0; 3], [0.0; 3]]).unwrap();
        let pred = PoseSeq3D::new(1, 2, vec![[100.0, 0.0, 0.0], [0.0, 200.0, 0.0]]).unwrap();
        assert_eq!(pck(&pred, &gt, 150.0).unwrap(), 0.5);
        assert_eq!(pck(&gt, &gt, 150.0).unwrap(), 1.0);
        assert_eq!(auc(&gt, &gt).unwrap(), 1.0);
        assert!(pck(&gt, &gt, 0.0).is_err());
        assert!(pck(&gt, &gt, -1.0).is_err());

        // Brute-force enumeration of the grid for a uniform 80 mm error.
        let eighty = PoseSeq3D::new(1, 2, vec![[80.0, 0.0, 0.0], [0.0, 0.0, 80.0]]).unwrap();
        let passing = (0..=30).filter(|i| 80.0 < 5.0 * *i as f64).count();
        assert_eq!(passing, 14);
        assert!((auc(&eighty, &gt).unwrap() - 14.0 / 31.0).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let gt = PoseSeq3D::new(1, 3, vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let report = MetricReport::evaluate(&gt, &gt, Alignment::Similarity).unwrap();
        let csv = metrics_csv(&[MetricRow {
            method: "jpma".into(),
            hypotheses: 20,
            iterations: 10,
            report,
        }]);
        assert_eq!(csv, "method,H,K,mpjpe_mm,pmpjpe_mm,pck150,auc\njpma,20,10,0,0,1,1\n");
    }

    proptest! {
        #[test]
        fn pmpjpe_never_exceeds_mpjpe(seed in any::<u64>()) {
            let mut rng = RngStream::new(seed, 0);
            let a = random_pose(&mut rng, 6);
            let b = random_pose(&mut rng, 6);
            let m = mpjpe(&a, &b).unwrap();
            prop_assert!(pmpjpe(&a, &b, Alignment::Similarity).unwrap() <= m);
            prop_assert!(pmpjpe(&a, &b, Alignment::Rigid).unwrap() <= m);
        }

        #[test]
        fn mpjpe_is_a_metric(seed in any::<u64>()) {
            let mut rng = RngStream::new(seed, 1);
            let (a, b, c) = (random_pose(&mut rng, 4), random_pose(&mut rng, 4), random_pose(&mut rng, 4));
            let ab = mpjpe(&a, &b).unwrap();
            prop_assert_eq!(ab, mpjpe(&b, &a).unwrap());
            prop_assert!(ab <= mpjpe(&a, &c).unwrap() + mpjpe(&c, &b).unwrap() + 1e-9);
        }

        #[test]
        fn pck_monotone(seed in any::<u64>()) {
            let mut rng = RngStream::new(seed, 2);
            let (a, b) = (random_pose(&mut rng, 10), random_pose(&mut rng, 10));
            let grid: Vec<f64> = (1..=60).map(|i| 10.0 * i as f64).collect();
            let values: Vec<f64> = grid.iter().map(|&t| pck(&a, &b, t).unwrap()).collect();
            prop_assert!(values.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
