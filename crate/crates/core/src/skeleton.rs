//! Kinematic tree with left/right mirror pairs and bone lengths.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::{Error, Result};

/// A rooted joint tree.
///
/// `bone_lengths[j]` is the length of the bone from `parent(j)` to `j` in
/// millimetres; the root entry is stored as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SkeletonJson", into = "SkeletonJson")]
pub struct Skeleton {
    parents: Vec<Option<usize>>,
    mirror_pairs: Vec<(usize, usize)>,
    bone_lengths: Vec<f64>,
    rest_directions: Option<Vec<[f64; 3]>>,
}

/// On-disk form: `parents` uses `-1` for the root and `bone_lengths` lists
/// the non-root joints in index order.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SkeletonJson {
    num_joints: usize,
    parents: Vec<i64>,
    mirror_pairs: Vec<[usize; 2]>,
    bone_lengths: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rest_directions: Option<Vec<[f64; 3]>>,
}

impl TryFrom<SkeletonJson> for Skeleton {
    type Error = Error;

    fn try_from(raw: SkeletonJson) -> Result<Self> {
        if raw.parents.len() != raw.num_joints {
            return Err(Error::InvalidSkeleton(format!(
                "num_joints = {} but {} parent entries",
                raw.num_joints,
                raw.parents.len()
            )));
        }
        let parents = raw
            .parents
            .iter()
            .enumerate()
            .map(|(j, &p)| match p {
                -1 => Ok(None),
                p if p >= 0 && p as usize == j => Ok(None),
                p if p >= 0 => Ok(Some(p as usize)),
                p => Err(Error::InvalidSkeleton(format!(
                    "joint {j} has invalid parent {p}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        let non_root = parents.iter().filter(|p| p.is_some()).count();
        if raw.bone_lengths.len() != non_root {
            return Err(Error::InvalidSkeleton(format!(
                "expected {non_root} bone lengths, found {}",
                raw.bone_lengths.len()
            )));
        }
        let mut lengths = raw.bone_lengths.into_iter();
        let bone_lengths = parents
            .iter()
            .map(|p| match p {
                Some(_) => lengths.next().unwrap_or_default(),
                None => 0.0,
            })
            .collect();
        let pairs = raw.mirror_pairs.iter().map(|&[l, r]| (l, r)).collect();
        Skeleton::new(parents, pairs, bone_lengths, raw.rest_directions)
    }
}

impl From<Skeleton> for SkeletonJson {
    fn from(s: Skeleton) -> Self {
        SkeletonJson {
            num_joints: s.num_joints(),
            parents: s
                .parents
                .iter()
                .map(|p| p.map_or(-1, |p| p as i64))
                .collect(),
            mirror_pairs: s.mirror_pairs.iter().map(|&(l, r)| [l, r]).collect(),
            bone_lengths: s
                .parents
                .iter()
                .zip(&s.bone_lengths)
                .filter(|(p, _)| p.is_some())
                .map(|(_, &len)| len)
                .collect(),
            rest_directions: s.rest_directions,
        }
    }
}

impl Skeleton {
    pub fn new(
        parents: Vec<Option<usize>>,
        mirror_pairs: Vec<(usize, usize)>,
        bone_lengths: Vec<f64>,
        rest_directions: Option<Vec<[f64; 3]>>,
    ) -> Result<Self> {
        let n = parents.len();
        if n == 0 {
            return Err(Error::InvalidSkeleton("skeleton has no joints".into()));
        }
        let roots = parents.iter().filter(|p| p.is_none()).count();
        if roots != 1 {
            return Err(Error::InvalidSkeleton(format!(
                "expected exactly one root, found {roots}"
            )));
        }
        for (j, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                if p >= n {
                    return Err(Error::InvalidSkeleton(format!(
                        "joint {j} has parent {p} out of range"
                    )));
                }
            }
        }
        // Every joint must reach the root within n hops, otherwise there is a cycle.
        for start in 0..n {
            let mut j = start;
            let mut hops = 0;
            while let Some(p) = parents[j] {
                j = p;
                hops += 1;
                if hops > n {
                    return Err(Error::InvalidSkeleton(format!(
                        "parent links from joint {start} form a cycle"
                    )));
                }
            }
        }
        let mut seen = vec![false; n];
        for &(l, r) in &mirror_pairs {
            if l >= n || r >= n {
                return Err(Error::InvalidSkeleton(format!(
                    "mirror pair ({l}, {r}) out of range for {n} joints"
                )));
            }
            if l == r || seen[l] || seen[r] {
                return Err(Error::InvalidSkeleton(format!(
                    "joint appears in more than one mirror pair at ({l}, {r})"
                )));
            }
            seen[l] = true;
            seen[r] = true;
        }
        if bone_lengths.len() != n {
            return Err(Error::InvalidSkeleton(format!(
                "expected {n} bone lengths, found {}",
                bone_lengths.len()
            )));
        }
        for (j, (&len, p)) in bone_lengths.iter().zip(&parents).enumerate() {
            if p.is_some() && !(len > 0.0 && len.is_finite()) {
                return Err(Error::InvalidSkeleton(format!(
                    "bone length of joint {j} must be positive, got {len}"
                )));
            }
        }
        if let Some(dirs) = &rest_directions {
            if dirs.len() != n {
                return Err(Error::InvalidSkeleton(format!(
                    "expected {n} rest directions, found {}",
                    dirs.len()
                )));
            }
        }
        let bone_lengths = bone_lengths
            .into_iter()
            .zip(&parents)
            .map(|(len, p)| if p.is_some() { len } else { 0.0 })
            .collect();
        Ok(Skeleton {
            parents,
            mirror_pairs,
            bone_lengths,
            rest_directions,
        })
    }

    /// 17-joint Human3.6M topology rooted at the pelvis.
    ///
    /// Joint order: pelvis, r-hip, r-knee, r-ankle, l-hip, l-knee, l-ankle,
    /// spine, thorax, neck, head, l-shoulder, l-elbow, l-wrist, r-shoulder,
    /// r-elbow, r-wrist. Camera convention: +x right, +y down, +z forward.
    pub fn h36m() -> Self {
        const PARENTS: [i64; 17] = [-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15];
        const LENGTHS: [f64; 17] = [
            0.0, 132.0, 442.0, 454.0, 132.0, 442.0, 454.0, 233.0, 257.0, 121.0, 115.0, 151.0,
            278.0, 252.0, 151.0, 278.0, 252.0,
        ];
        const UP: [f64; 3] = [0.0, -1.0, 0.0];
        const DOWN: [f64; 3] = [0.0, 1.0, 0.0];
        const LEFT: [f64; 3] = [1.0, 0.0, 0.0];
        const RIGHT: [f64; 3] = [-1.0, 0.0, 0.0];
        let rest = vec![
            [0.0, 0.0, 0.0],
            RIGHT,
            DOWN,
            DOWN,
            LEFT,
            DOWN,
            DOWN,
            UP,
            UP,
            UP,
            UP,
            LEFT,
            DOWN,
            DOWN,
            RIGHT,
            DOWN,
            DOWN,
        ];
        Skeleton::new(
            PARENTS.iter().map(|&p| usize::try_from(p).ok()).collect(),
            vec![(4, 1), (5, 2), (6, 3), (11, 14), (12, 15), (13, 16)],
            LENGTHS.to_vec(),
            Some(rest),
        )
        .expect("built-in skeleton is valid")
    }

    /// Root with a left and a right child, used for small models and tests.
    pub fn three_joint() -> Self {
        Skeleton::new(
            vec![None, Some(0), Some(0)],
            vec![(1, 2)],
            vec![0.0, 100.0, 100.0],
            Some(vec![[0.0; 3], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]),
        )
        .expect("built-in skeleton is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn num_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn root(&self) -> usize {
        self.parents
            .iter()
            .position(Option::is_none)
            .expect("validated skeleton has a root")
    }

    pub fn mirror_pairs(&self) -> &[(usize, usize)] {
        &self.mirror_pairs
    }

    pub fn bone_length(&self, joint: usize) -> f64 {
        self.bone_lengths[joint]
    }

    pub fn rest_directions(&self) -> Option<&[[f64; 3]]> {
        self.rest_directions.as_deref()
    }

    /// Permutation mapping each joint to its mirror partner (identity for unpaired joints).
    pub fn mirror_permutation(&self) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..self.num_joints()).collect();
        for &(l, r) in &self.mirror_pairs {
            perm[l] = r;
            perm[r] = l;
        }
        perm
    }

    /// Joints ordered so that every parent precedes its children.
    pub fn topological_order(&self) -> Vec<usize> {
        let n = self.num_joints();
        let mut depth = vec![0usize; n];
        for (j, d) in depth.iter_mut().enumerate() {
            let mut k = j;
            while let Some(p) = self.parents[k] {
                *d += 1;
                k = p;
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&j| (depth[j], j));
        order
    }

    /// Longest root-to-leaf chain length in millimetres.
    pub fn reach(&self) -> f64 {
        (0..self.num_joints())
            .map(|j| {
                let mut k = j;
                let mut total = 0.0;
                while let Some(p) = self.parents[k] {
                    total += self.bone_lengths[k];
                    k = p;
                }
                total
            })
            .fold(0.0, f64::max)
    }
}
