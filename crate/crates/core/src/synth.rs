//! Synthetic poses, 2D observations and hypothesis clouds.

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{project, CameraIntrinsics, DEFAULT_Z_MIN};
use crate::{Error, HypothesisSet, PoseSeq2D, PoseSeq3D, Result, RngStream, Skeleton};

/// Axis-aligned box (mm, camera frame) from which root positions are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for RootBox {
    fn default() -> Self {
        Self {
            min: [-500.0, -300.0, 4000.0],
            max: [500.0, 300.0, 6000.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HypothesisModel {
    /// Isotropic Gaussian noise around every joint.
    IidGaussian { sigma_mm: f64 },
    /// Independent noise along the camera ray through each joint and in the
    /// plane perpendicular to it.
    DepthRay { sigma_ray: f64, sigma_perp: f64 },
    /// Each joint is either near the truth (`inlier_sigma_mm`) or, with
    /// probability `p_wrong`, displaced by `offset_mm` in a random direction.
    Bimodal {
        offset_mm: f64,
        p_wrong: f64,
        #[serde(default = "default_inlier_sigma")]
        inlier_sigma_mm: f64,
    },
}

fn default_inlier_sigma() -> f64 {
    10.0
}

impl Default for HypothesisModel {
    fn default() -> Self {
        Self::IidGaussian { sigma_mm: 20.0 }
    }
}

impl HypothesisModel {
    pub fn validate(&self) -> Result<()> {
        let ok = |s: f64| s >= 0.0 && s.is_finite();
        let valid = match *self {
            Self::IidGaussian { sigma_mm } => ok(sigma_mm),
            Self::DepthRay { sigma_ray, sigma_perp } => ok(sigma_ray) && ok(sigma_perp),
            Self::Bimodal {
                offset_mm,
                p_wrong,
                inlier_sigma_mm,
            } => ok(offset_mm) && ok(inlier_sigma_mm) && (0.0..=1.0).contains(&p_wrong),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid hypothesis model {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub skeleton: Skeleton,
    pub camera: CameraIntrinsics,
    pub poses: usize,
    pub frames_per_pose: usize,
    /// Standard deviation of the 2D keypoint noise (pixels).
    pub pixel_noise: f64,
    pub root_box: RootBox,
    /// Half-width (radians) of the uniform range for each local joint angle.
    pub joint_angle_range: f64,
    pub hypotheses: usize,
    pub hypothesis_model: HypothesisModel,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            skeleton: Skeleton::h36m(),
            camera: CameraIntrinsics::pinhole(1145.0, 1144.0, 500.0, 500.0).expect("valid camera"),
            poses: 100,
            frames_per_pose: 1,
            pixel_noise: 0.0,
            root_box: RootBox::default(),
            joint_angle_range: 0.5,
            hypotheses: 20,
            hypothesis_model: HypothesisModel::default(),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let b = &self.root_box;
        if (0..3).any(|k| b.min[k].is_nan() || b.max[k].is_nan() || b.min[k] > b.max[k]) {
            return Err(Error::InvalidArgument("root box min exceeds max".into()));
        }
        if b.min[2] - self.skeleton.reach() <= DEFAULT_Z_MIN {
            return Err(Error::InvalidArgument(format!(
                "root box starts at depth {} mm; poses up to {} mm from the root would reach behind the camera",
                b.min[2],
                self.skeleton.reach()
            )));
        }
        if !(self.pixel_noise >= 0.0 && self.pixel_noise.is_finite()) {
            return Err(Error::InvalidArgument("pixel noise must be non-negative".into()));
        }
        if !(self.joint_angle_range >= 0.0 && self.joint_angle_range.is_finite()) {
            return Err(Error::InvalidArgument("joint angle range must be non-negative".into()));
        }
        if self.frames_per_pose == 0 {
            return Err(Error::InvalidArgument("frames_per_pose must be positive".into()));
        }
        self.hypothesis_model.validate()
    }
}

/// One generated sample: ground truth (mm) and its noisy projection (px).
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPose {
    pub gt: PoseSeq3D,
    pub x: PoseSeq2D,
}

fn random_rotation(rng: &mut RngStream, range: f64) -> Rotation3<f64> {
    let (a, b, c) = (
        rng.uniform_range(-range, range),
        rng.uniform_range(-range, range),
        rng.uniform_range(-range, range),
    );
    Rotation3::from_euler_angles(a, b, c)
}

/// Forward kinematics of one frame with random local rotations.
fn sample_frame(skeleton: &Skeleton, cfg: &ScenarioConfig, rng: &mut RngStream) -> Vec<[f64; 3]> {
    let j = skeleton.num_joints();
    let b = &cfg.root_box;
    let root = Vector3::from_fn(|k, _| rng.uniform_range(b.min[k], b.max[k]));
    let yaw = rng.uniform_range(-std::f64::consts::PI, std::f64::consts::PI);
    let global = Rotation3::from_axis_angle(&Vector3::y_axis(), yaw) * random_rotation(rng, 0.2);
    let mut rot = vec![Rotation3::identity(); j];
    let mut pos = vec![Vector3::zeros(); j];
    for joint in skeleton.topological_order() {
        match skeleton.parent(joint) {
            None => {
                rot[joint] = global;
                pos[joint] = root;
            }
            Some(parent) => {
                rot[joint] = rot[parent] * random_rotation(rng, cfg.joint_angle_range);
                let dir = skeleton
                    .rest_directions()
                    .map(|d| Vector3::from(d[joint]).normalize())
                    .unwrap_or_else(|| Vector3::new(0.0, 1.0, 0.0));
                pos[joint] = pos[parent] + skeleton.bone_length(joint) * (rot[joint] * dir);
            }
        }
    }
    pos.into_iter().map(Into::into).collect()
}

/// Generates `cfg.poses` ground-truth sequences and their 2D observations.
/// Frames within a sequence are drawn independently.
pub fn gen_poses(cfg: &ScenarioConfig) -> Result<Vec<SynthPose>> {
    cfg.validate()?;
    let joints = cfg.skeleton.num_joints();
    (0..cfg.poses)
        .map(|i| {
            let mut rng = RngStream::named(cfg.seed, "pose", i as u64);
            let points = (0..cfg.frames_per_pose)
                .flat_map(|_| sample_frame(&cfg.skeleton, cfg, &mut rng))
                .collect();
            let gt = PoseSeq3D::new(cfg.frames_per_pose, joints, points)?;
            let mut x = project(&gt, &cfg.camera)?;
            if cfg.pixel_noise > 0.0 {
                let mut noise = RngStream::named(cfg.seed, "pixel-noise", i as u64);
                for p in x.points_mut() {
                    p[0] += cfg.pixel_noise * noise.normal();
                    p[1] += cfg.pixel_noise * noise.normal();
                }
            }
            Ok(SynthPose { gt, x })
        })
        .collect()
}

fn normal3(rng: &mut RngStream) -> Vector3<f64> {
    Vector3::new(rng.normal(), rng.normal(), rng.normal())
}

fn unit_direction(rng: &mut RngStream) -> Vector3<f64> {
    loop {
        let v = normal3(rng);
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Draws `count` hypotheses around `gt`.
///
/// Camera rays pass through the origin of the camera frame, so moving a
/// joint along `gt / |gt|` leaves its projection unchanged for both camera
/// models.
pub fn gen_hypotheses(
    gt: &PoseSeq3D,
    model: &HypothesisModel,
    count: usize,
    rng: &mut RngStream,
) -> Result<HypothesisSet> {
    model.validate()?;
    if count == 0 {
        return Err(Error::InvalidArgument("need at least one hypothesis".into()));
    }
    let hyps = (0..count)
        .map(|_| {
            let points = gt
                .points()
                .iter()
                .map(|p| {
                    let g = Vector3::from(*p);
                    let out = match *model {
                        HypothesisModel::IidGaussian { sigma_mm } => g + sigma_mm * normal3(rng),
                        HypothesisModel::DepthRay { sigma_ray, sigma_perp } => {
                            let along = g.normalize();
                            let helper = if along.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
                            let e1 = along.cross(&helper).normalize();
                            let e2 = along.cross(&e1);
                            let (a, b, c) = (rng.normal(), rng.normal(), rng.normal());
                            g + sigma_ray * a * along + sigma_perp * (b * e1 + c * e2)
                        }
                        HypothesisModel::Bimodal {
                            offset_mm,
                            p_wrong,
                            inlier_sigma_mm,
                        } => {
                            if rng.uniform() < p_wrong {
                                g + offset_mm * unit_direction(rng)
                            } else {
                                g + inlier_sigma_mm * normal3(rng)
                            }
                        }
                    };
                    out.into()
                })
                .collect();
            PoseSeq3D::new(gt.frames(), gt.joints(), points)
        })
        .collect::<Result<Vec<_>>>()?;
    HypothesisSet::new(hyps)
}

/// Hypotheses for the `index`-th pose of a scenario, from its own stream.
pub fn scenario_hypotheses(cfg: &ScenarioConfig, index: usize, gt: &PoseSeq3D) -> Result<HypothesisSet> {
    let mut rng = RngStream::named(cfg.seed, "hypotheses", index as u64);
    gen_hypotheses(gt, &cfg.hypothesis_model, cfg.hypotheses, &mut rng)
}

/// Describes a generated dataset on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioManifest {
    pub config: ScenarioConfig,
    /// `(gt file, 2D file)` per pose, relative to the manifest.
    pub files: Vec<(String, String)>,
}
