use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::geometry::{CameraPose, Intrinsics};
use crate::image::{read_pfm, DepthMap};
use crate::plan::Trajectory;
use crate::render::Scene;

use super::{depth_at, memo_key, valid_depth};

/// Stand-in for a novel-view generator plus metric depth estimator: given a
/// camera scale and a trajectory, produce depth maps for the requested frames.
///
/// Implementations must be deterministic. If `concurrent` is true the search
/// may call `generate` from several threads at once.
pub trait NvsOracle: Sync {
    fn generate(&self, theta: f64, trajectory: &Trajectory, frames: &[usize], intr: &Intrinsics) -> Result<Vec<DepthMap>>;

    fn concurrent(&self) -> bool {
        true
    }
}

fn frame_pose(theta: f64, trajectory: &Trajectory, i: usize) -> Result<CameraPose> {
    trajectory.poses.get(i).copied().ok_or_else(|| Error::OracleFailure {
        theta,
        message: format!("frame {i} outside a {}-frame trajectory", trajectory.poses.len()),
    })
}

/// Renders proxy depth from poses whose offsets from the trajectory centroid
/// are scaled by `theta / theta_true`, so the loss vanishes at `theta_true`.
#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    scene: Scene,
    theta_true: f64,
}

impl SyntheticOracle {
    pub fn new(scene: Scene, theta_true: f64) -> Result<Self> {
        if !(theta_true.is_finite() && theta_true > 0.0) {
            return Err(Error::Config(format!("true camera scale {theta_true} must be positive")));
        }
        Ok(SyntheticOracle { scene, theta_true })
    }

    pub fn theta_true(&self) -> f64 {
        self.theta_true
    }
}

impl NvsOracle for SyntheticOracle {
    fn generate(&self, theta: f64, trajectory: &Trajectory, frames: &[usize], intr: &Intrinsics) -> Result<Vec<DepthMap>> {
        let c = trajectory.centroid();
        let s = theta / self.theta_true;
        frames
            .iter()
            .map(|&i| {
                let p = frame_pose(theta, trajectory, i)?;
                let moved = CameraPose::new(p.rotation, c + (p.position - c) * s);
                Ok(depth_at(&self.scene, &moved, intr))
            })
            .collect()
    }
}

/// Replays depth maps stored as `theta_{:.3}/frame_{:04}.pfm` under a
/// directory, frame numbers indexing the trajectory.
#[derive(Debug, Clone)]
pub struct ReplayDirOracle {
    root: PathBuf,
}

impl ReplayDirOracle {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ReplayDirOracle { root: root.into() }
    }

    pub fn frame_path(&self, theta: f64, frame: usize) -> PathBuf {
        self.root.join(format!("theta_{theta:.3}")).join(format!("frame_{frame:04}.pfm"))
    }
}

impl NvsOracle for ReplayDirOracle {
    fn generate(&self, theta: f64, _trajectory: &Trajectory, frames: &[usize], intr: &Intrinsics) -> Result<Vec<DepthMap>> {
        frames
            .iter()
            .map(|&i| {
                let path = self.frame_path(theta, i);
                let d = read_pfm(&path).map_err(|e| Error::OracleFailure { theta, message: e.to_string() })?;
                if d.dims() != (intr.width as usize, intr.height as usize) {
                    return Err(Error::OracleFailure {
                        theta,
                        message: format!(
                            "{} is {:?}, expected {}x{}",
                            path.display(),
                            d.dims(),
                            intr.width,
                            intr.height
                        ),
                    });
                }
                Ok(d)
            })
            .collect()
    }
}

/// Produces the reference depth shifted by a tabulated loss per camera
/// scale, so that the alignment loss reproduces the table. Unlisted scales
/// fail.
#[derive(Debug, Clone)]
pub struct LossTableOracle {
    scene: Scene,
    table: Vec<(f64, f64)>,
}

impl LossTableOracle {
    pub fn new(scene: Scene, table: &[(f64, f64)]) -> Self {
        LossTableOracle { scene, table: table.to_vec() }
    }
}

impl NvsOracle for LossTableOracle {
    fn generate(&self, theta: f64, trajectory: &Trajectory, frames: &[usize], intr: &Intrinsics) -> Result<Vec<DepthMap>> {
        let offset = self
            .table
            .iter()
            .find(|(t, _)| memo_key(*t) == memo_key(theta))
            .map(|(_, l)| *l)
            .ok_or_else(|| Error::OracleFailure {
                theta,
                message: "camera scale not in the replay table".into(),
            })?;
        frames
            .iter()
            .map(|&i| {
                let p = frame_pose(theta, trajectory, i)?;
                Ok(depth_at(&self.scene, &p, intr).map(|d| if valid_depth(d) { d + offset } else { d }))
            })
            .collect()
    }
}
