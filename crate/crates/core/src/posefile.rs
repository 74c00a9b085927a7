//! JSON Lines pose files.
//!
//! ```text
//! {"J":17,"dims":3}
//! {"frame":0,"joints":[[x,y,z],...]}
//! {"frame":1,"joints":[[x,y,z],...]}
//! ```
//!
//! Numbers are written in shortest round-trip form, so a save/load cycle
//! reproduces every coordinate bit for bit.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, PoseSeq2D, PoseSeq3D, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum PoseFile {
    Pose3D(PoseSeq3D),
    Pose2D(PoseSeq2D),
}

impl From<PoseSeq3D> for PoseFile {
    fn from(p: PoseSeq3D) -> Self {
        PoseFile::Pose3D(p)
    }
}

impl From<PoseSeq2D> for PoseFile {
    fn from(p: PoseSeq2D) -> Self {
        PoseFile::Pose2D(p)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    #[serde(rename = "J")]
    joints: usize,
    dims: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    frame: usize,
    joints: Vec<Vec<f64>>,
}

fn write_records<const D: usize>(out: &mut String, joints: usize, points: &[[f64; D]]) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string(&Header { joints, dims: D })?).unwrap();
    for (f, frame) in points.chunks(joints).enumerate() {
        let rows: Vec<&[f64]> = frame.iter().map(|p| p.as_slice()).collect();
        let body = serde_json::to_string(&rows)?;
        writeln!(out, "{{\"frame\":{f},\"joints\":{body}}}").unwrap();
    }
    Ok(())
}

pub fn to_string(p: &PoseFile) -> Result<String> {
    let mut out = String::new();
    match p {
        PoseFile::Pose3D(p) => write_records(&mut out, p.joints(), p.points())?,
        PoseFile::Pose2D(p) => write_records(&mut out, p.joints(), p.points())?,
    }
    Ok(out)
}

pub fn from_str(text: &str) -> Result<PoseFile> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header_line) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty pose file".into(),
    })?;
    let header: Header = serde_json::from_str(header_line).map_err(|e| Error::Parse {
        line: 1,
        message: format!("bad header: {e}"),
    })?;
    if header.dims != 2 && header.dims != 3 {
        return Err(Error::Schema(format!("dims must be 2 or 3, got {}", header.dims)));
    }
    if header.joints == 0 {
        return Err(Error::Schema("J must be positive".into()));
    }
    let mut coords: Vec<f64> = Vec::new();
    let mut frames = 0;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let rec: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if rec.frame != frames {
            return Err(Error::Schema(format!(
                "line {lineno}: expected frame {frames}, found {}",
                rec.frame
            )));
        }
        if rec.joints.len() != header.joints {
            return Err(Error::Schema(format!(
                "line {lineno}: {} joints, header says {}",
                rec.joints.len(),
                header.joints
            )));
        }
        for (j, c) in rec.joints.iter().enumerate() {
            if c.len() != header.dims {
                return Err(Error::Schema(format!(
                    "line {lineno}: joint {j} has {} coordinates, header says {}",
                    c.len(),
                    header.dims
                )));
            }
            coords.extend_from_slice(c);
        }
        frames += 1;
    }
    if frames == 0 {
        return Err(Error::Parse {
            line: 2,
            message: "pose file has a header but no frames".into(),
        });
    }
    Ok(match header.dims {
        3 => PoseFile::Pose3D(PoseSeq3D::new(
            frames,
            header.joints,
            coords.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        )?),
        _ => PoseFile::Pose2D(PoseSeq2D::new(
            frames,
            header.joints,
            coords.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
        )?),
    })
}

pub fn load_poses(path: impl AsRef<Path>) -> Result<PoseFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(&text)
}

pub fn save_poses(p: &PoseFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_string(p)?).map_err(|e| Error::io(path, e))
}

pub fn load_pose3d(path: impl AsRef<Path>) -> Result<PoseSeq3D> {
    match load_poses(path)? {
        PoseFile::Pose3D(p) => Ok(p),
        PoseFile::Pose2D(_) => Err(Error::Schema("expected a 3D pose file, found 2D".into())),
    }
}

pub fn load_pose2d(path: impl AsRef<Path>) -> Result<PoseSeq2D> {
    match load_poses(path)? {
        PoseFile::Pose2D(p) => Ok(p),
        PoseFile::Pose3D(_) => Err(Error::Schema("expected a 2D pose file, found 3D".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_file_is_a_parse_error() {
        assert!(matches!(from_str(""), Err(Error::Parse { .. })));
        assert!(matches!(from_str("{\"J\":1,\"dims\":3}\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn short_record_is_a_schema_error() {
        let text = "{\"J\":1,\"dims\":3}\n{\"frame\":0,\"joints\":[[1.0,2.0]]}\n";
        assert!(matches!(from_str(text), Err(Error::Schema(_))));
    }

    #[test]
    fn malformed_record_names_its_line() {
        let text = "{\"J\":1,\"dims\":2}\n{\"frame\":0,\"joints\":[[1,2]]}\n{\"frame\":1,\"joints\":[[1,\n";
        match from_str(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let p = PoseFile::Pose2D(PoseSeq2D::new(2, 1, vec![[0.1, -2.5e-17], [1e300, 3.0]]).unwrap());
        save_poses(&p, &path).unwrap();
        assert_eq!(load_poses(&path).unwrap(), p);
        assert!(load_pose3d(&path).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_identical(
            coords in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::ZERO | proptest::num::f64::SUBNORMAL, 3 * 4 * 2),
        ) {
            let p = PoseSeq3D::new(2, 4, coords.chunks(3).map(|c| [c[0], c[1], c[2]]).collect()).unwrap();
            let text = to_string(&PoseFile::Pose3D(p.clone())).unwrap();
            match from_str(&text).unwrap() {
                PoseFile::Pose3D(q) => {
                    for (a, b) in p.points().iter().zip(q.points()) {
                        for k in 0..3 {
                            prop_assert_eq!(a[k].to_bits(), b[k].to_bits());
                        }
                    }
                }
                PoseFile::Pose2D(_) => prop_assert!(false),
            }
        }
    }
}
