use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraPose, Intrinsics};

/// Ordered camera path with the sparse-circle culling record it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<CameraPose>,
    pub intrinsics: Intrinsics,
    /// Keep flag per pose of the sparse circle; empty for loaded paths.
    pub kept_mask: Vec<bool>,
    pub quadrant_id: usize,
    pub frame_count: usize,
}

impl Trajectory {
    pub fn new(poses: Vec<CameraPose>, intrinsics: Intrinsics) -> Self {
        Trajectory {
            frame_count: poses.len(),
            poses,
            intrinsics,
            kept_mask: Vec::new(),
            quadrant_id: 0,
        }
    }

    /// Mean camera position.
    pub fn centroid(&self) -> Vector3<f64> {
        let n = self.poses.len().max(1) as f64;
        self.poses.iter().map(|p| p.position).sum::<Vector3<f64>>() / n
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    frame: usize,
    position: [f64; 3],
    /// `[w, x, y, z]`
    quaternion: [f64; 4],
    fov_deg: f64,
    width: u32,
    height: u32,
}

pub fn trajectory_to_json(t: &Trajectory) -> String {
    let records: Vec<FrameRecord> = t
        .poses
        .iter()
        .enumerate()
        .map(|(frame, p)| {
            let q = p.rotation.quaternion();
            FrameRecord {
                frame,
                position: p.position.into(),
                quaternion: [q.w, q.i, q.j, q.k],
                fov_deg: t.intrinsics.fov_deg,
                width: t.intrinsics.width,
                height: t.intrinsics.height,
            }
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&records).expect("plain records serialize");
    s.push('\n');
    s
}

pub fn trajectory_from_json(text: &str) -> Result<Trajectory> {
    let records: Vec<FrameRecord> = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let first = records
        .first()
        .ok_or_else(|| Error::Parse("trajectory has no frames".into()))?;
    let intrinsics = Intrinsics::new(first.width, first.height, first.fov_deg)?;
    let mut poses = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if r.frame != i {
            return Err(Error::Parse(format!("frame {} listed at position {i}", r.frame)));
        }
        if (r.width, r.height, r.fov_deg) != (intrinsics.width, intrinsics.height, intrinsics.fov_deg) {
            return Err(Error::Parse(format!("frame {i} intrinsics differ from frame 0")));
        }
        let [w, x, y, z] = r.quaternion;
        let q = Quaternion::new(w, x, y, z);
        if !((q.norm() - 1.0).abs() <= 1e-6) {
            return Err(Error::Parse(format!("frame {i} quaternion is not unit length")));
        }
        if !r.position.iter().all(|v| v.is_finite()) {
            return Err(Error::Parse(format!("frame {i} position is not finite")));
        }
        poses.push(CameraPose::new(UnitQuaternion::from_quaternion(q), Vector3::from(r.position)));
    }
    Ok(Trajectory::new(poses, intrinsics))
}

pub fn save_trajectory(path: impl AsRef<Path>, t: &Trajectory) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, trajectory_to_json(t)).map_err(|e| Error::io(path, e))
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    trajectory_from_json(&text)
}
