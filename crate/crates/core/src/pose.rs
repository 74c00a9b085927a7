//! Pose sequences and hypothesis sets.
//!
//! 3D sequences are camera-space millimetres unless a function says it works
//! in normalized diffusion units; 2D sequences are pixels.

use crate::{Error, Result, Skeleton};

macro_rules! pose_seq {
    ($name:ident, $dims:literal) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            frames: usize,
            joints: usize,
            data: Vec<[f64; $dims]>,
        }

        impl $name {
            pub const DIMS: usize = $dims;

            /// Builds a sequence from frame-major joint data.
            pub fn new(frames: usize, joints: usize, data: Vec<[f64; $dims]>) -> Result<Self> {
                if frames == 0 || joints == 0 {
                    return Err(Error::Shape(format!(
                        "pose sequence needs at least one frame and joint, got {frames}x{joints}"
                    )));
                }
                if data.len() != frames * joints {
                    return Err(Error::Shape(format!(
                        "{} points for {frames} frames x {joints} joints",
                        data.len()
                    )));
                }
                if let Some(i) = data.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
                    return Err(Error::InvalidArgument(format!(
                        "non-finite coordinate at frame {}, joint {}",
                        i / joints,
                        i % joints
                    )));
                }
                Ok(Self { frames, joints, data })
            }

            pub fn zeros(frames: usize, joints: usize) -> Self {
                Self {
                    frames,
                    joints,
                    data: vec![[0.0; $dims]; frames * joints],
                }
            }

            pub fn frames(&self) -> usize {
                self.frames
            }

            pub fn joints(&self) -> usize {
                self.joints
            }

            pub fn points(&self) -> &[[f64; $dims]] {
                &self.data
            }

            pub fn points_mut(&mut self) -> &mut [[f64; $dims]] {
                &mut self.data
            }

            pub fn into_points(self) -> Vec<[f64; $dims]> {
                self.data
            }

            pub fn frame(&self, f: usize) -> &[[f64; $dims]] {
                &self.data[f * self.joints..(f + 1) * self.joints]
            }

            pub fn frame_mut(&mut self, f: usize) -> &mut [[f64; $dims]] {
                let j = self.joints;
                &mut self.data[f * j..(f + 1) * j]
            }

            pub fn get(&self, frame: usize, joint: usize) -> [f64; $dims] {
                self.data[frame * self.joints + joint]
            }

            pub fn same_shape(&self, other: &Self) -> bool {
                self.frames == other.frames && self.joints == other.joints
            }

            pub(crate) fn check_shape(&self, other: &Self, what: &str) -> Result<()> {
                if self.same_shape(other) {
                    Ok(())
                } else {
                    Err(Error::Shape(format!(
                        "{what}: {}x{} vs {}x{}",
                        self.frames, self.joints, other.frames, other.joints
                    )))
                }
            }

            /// Applies `f` to every coordinate.
            pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
                Self {
                    frames: self.frames,
                    joints: self.joints,
                    data: self.data.iter().map(|p| p.map(&f)).collect(),
                }
            }

            /// Applies `f` to every point.
            pub fn map_points(&self, f: impl Fn([f64; $dims]) -> [f64; $dims]) -> Self {
                Self {
                    frames: self.frames,
                    joints: self.joints,
                    data: self.data.iter().map(|p| f(*p)).collect(),
                }
            }

            /// Combines two equally shaped sequences coordinate-wise.
            pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
                self.check_shape(other, "zip_with")?;
                let data = self
                    .data
                    .iter()
                    .zip(&other.data)
                    .map(|(a, b)| std::array::from_fn(|k| f(a[k], b[k])))
                    .collect();
                Ok(Self {
                    frames: self.frames,
                    joints: self.joints,
                    data,
                })
            }

            /// Concatenates sequences along the frame axis.
            pub fn concat(parts: &[Self]) -> Result<Self> {
                let first = parts
                    .first()
                    .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
                let mut data = Vec::new();
                let mut frames = 0;
                for p in parts {
                    if p.joints != first.joints {
                        return Err(Error::Shape(format!(
                            "cannot concatenate {} and {} joints",
                            first.joints, p.joints
                        )));
                    }
                    frames += p.frames;
                    data.extend_from_slice(&p.data);
                }
                Ok(Self {
                    frames,
                    joints: first.joints,
                    data,
                })
            }
        }
    };
}

pose_seq!(PoseSeq3D, 3);
pose_seq!(PoseSeq2D, 2);

impl PoseSeq3D {
    /// Returns `Ok` if every depth exceeds `z_min`.
    pub fn check_camera_valid(&self, z_min: f64) -> Result<()> {
        match self.data.iter().position(|p| p[2] <= z_min) {
            None => Ok(()),
            Some(i) => Err(Error::BehindCamera {
                frame: i / self.joints,
                joint: i % self.joints,
                z: self.data[i][2],
            }),
        }
    }
}

fn check_pairs(skeleton: &Skeleton, joints: usize) -> Result<()> {
    for &(l, r) in skeleton.mirror_pairs() {
        if l >= joints || r >= joints {
            return Err(Error::InvalidSkeleton(format!(
                "mirror pair ({l}, {r}) out of range for {joints} joints"
            )));
        }
    }
    Ok(())
}

/// Horizontal flip in camera space: negate X and swap mirrored joints.
pub fn flip_pose3d(p: &PoseSeq3D, skeleton: &Skeleton) -> Result<PoseSeq3D> {
    check_pairs(skeleton, p.joints)?;
    let mut out = p.map(|c| c);
    for pt in out.points_mut() {
        pt[0] = -pt[0];
    }
    for f in 0..out.frames {
        let frame = out.frame_mut(f);
        for &(l, r) in skeleton.mirror_pairs() {
            frame.swap(l, r);
        }
    }
    Ok(out)
}

/// Horizontal image flip: `u -> image_width - u` and swap mirrored joints.
pub fn flip_pose2d(p: &PoseSeq2D, skeleton: &Skeleton, image_width: f64) -> Result<PoseSeq2D> {
    if !(image_width > 0.0 && image_width.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "image width must be positive, got {image_width}"
        )));
    }
    check_pairs(skeleton, p.joints)?;
    let mut out = p.map(|c| c);
    for pt in out.points_mut() {
        pt[0] = image_width - pt[0];
    }
    for f in 0..out.frames {
        let frame = out.frame_mut(f);
        for &(l, r) in skeleton.mirror_pairs() {
            frame.swap(l, r);
        }
    }
    Ok(out)
}

/// H pose hypotheses for one 2D observation, all with the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet {
    hypotheses: Vec<PoseSeq3D>,
}

impl HypothesisSet {
    pub fn new(hypotheses: Vec<PoseSeq3D>) -> Result<Self> {
        let first = hypotheses
            .first()
            .ok_or_else(|| Error::InvalidArgument("hypothesis set must not be empty".into()))?;
        for (h, p) in hypotheses.iter().enumerate() {
            if !p.same_shape(first) {
                return Err(Error::Shape(format!(
                    "hypothesis {h} is {}x{}, expected {}x{}",
                    p.frames(),
                    p.joints(),
                    first.frames(),
                    first.joints()
                )));
            }
        }
        Ok(Self { hypotheses })
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn frames(&self) -> usize {
        self.hypotheses[0].frames()
    }

    pub fn joints(&self) -> usize {
        self.hypotheses[0].joints()
    }

    pub fn get(&self, h: usize) -> &PoseSeq3D {
        &self.hypotheses[h]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PoseSeq3D> {
        self.hypotheses.iter()
    }

    pub fn as_slice(&self) -> &[PoseSeq3D] {
        &self.hypotheses
    }

    pub fn into_inner(self) -> Vec<PoseSeq3D> {
        self.hypotheses
    }

    /// The first `count` hypotheses.
    pub fn prefix(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.len() {
            return Err(Error::InvalidArgument(format!(
                "prefix of {count} from {} hypotheses",
                self.len()
            )));
        }
        Ok(Self {
            hypotheses: self.hypotheses[..count].to_vec(),
        })
    }
}

impl<'a> IntoIterator for &'a HypothesisSet {
    type Item = &'a PoseSeq3D;
    type IntoIter = std::slice::Iter<'a, PoseSeq3D>;

    fn into_iter(self) -> Self::IntoIter {
        self.hypotheses.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_joint() -> Skeleton {
        Skeleton::new(vec![None], vec![], vec![0.0], None).unwrap()
    }

    #[test]
    fn flip3d_single_joint() {
        let p = PoseSeq3D::new(1, 1, vec![[3.0, 1.0, 2.0]]).unwrap();
        let f = flip_pose3d(&p, &one_joint()).unwrap();
        assert_eq!(f.points(), &[[-3.0, 1.0, 2.0]]);
    }

    #[test]
    fn flip3d_swaps_pairs() {
        let s = Skeleton::three_joint();
        let p = PoseSeq3D::new(1, 3, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [-2.0, 0.0, 0.0]]).unwrap();
        let f = flip_pose3d(&p, &s).unwrap();
        assert_eq!(f.get(0, 1), [2.0, 0.0, 0.0]);
        assert_eq!(f.get(0, 2), [-1.0, 0.0, 0.0]);
    }

    #[test]
    fn flip2d_reflects_and_swaps() {
        let p = PoseSeq2D::new(1, 1, vec![[100.0, 7.0]]).unwrap();
        let f = flip_pose2d(&p, &one_joint(), 1000.0).unwrap();
        assert_eq!(f.points(), &[[900.0, 7.0]]);

        let s = Skeleton::three_joint();
        let p = PoseSeq2D::new(1, 3, vec![[500.0, 0.0], [600.0, 1.0], [300.0, 2.0]]).unwrap();
        let f = flip_pose2d(&p, &s, 1000.0).unwrap();
        assert_eq!(f.get(0, 1), [700.0, 2.0]);
        assert_eq!(f.get(0, 2), [400.0, 1.0]);
        assert!(flip_pose2d(&p, &s, 0.0).is_err());
    }

    #[test]
    fn flip_rejects_pairs_out_of_range() {
        let p = PoseSeq3D::new(1, 2, vec![[0.0; 3]; 2]).unwrap();
        assert!(matches!(
            flip_pose3d(&p, &Skeleton::three_joint()),
            Err(Error::InvalidSkeleton(_))
        ));
    }

    #[test]
    fn rejects_non_finite_and_bad_shapes() {
        assert!(PoseSeq3D::new(1, 1, vec![[f64::NAN, 0.0, 1.0]]).is_err());
        assert!(PoseSeq3D::new(2, 1, vec![[0.0; 3]]).is_err());
        assert!(HypothesisSet::new(vec![]).is_err());
        assert!(HypothesisSet::new(vec![PoseSeq3D::zeros(1, 2), PoseSeq3D::zeros(1, 3)]).is_err());
    }

    proptest! {
        #[test]
        fn flips_are_involutions(
            coords in proptest::collection::vec(-1e4f64..1e4, 2 * 17 * 3),
            width in 1.0f64..4000.0,
        ) {
            let s = Skeleton::h36m();
            let pts: Vec<[f64; 3]> = coords.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
            let p = PoseSeq3D::new(2, 17, pts.clone()).unwrap();
            let back = flip_pose3d(&flip_pose3d(&p, &s).unwrap(), &s).unwrap();
            prop_assert_eq!(&back, &p);

            let p2 = PoseSeq2D::new(2, 17, pts.iter().map(|c| [c[0].abs() % width, c[1]]).collect()).unwrap();
            let back2 = flip_pose2d(&flip_pose2d(&p2, &s, width).unwrap(), &s, width).unwrap();
            for (a, b) in back2.points().iter().zip(p2.points()) {
                // width - (width - u) is exact only up to one rounding step
                prop_assert!((a[0] - b[0]).abs() <= 1e-12 * width.max(1.0));
                prop_assert_eq!(a[1], b[1]);
            }
        }
    }
}
