//! Camera-scale alignment: depth discrepancy between generated and proxy
//! depth, the coarse-to-fine bisection search over the scale parameter, and
//! pose error reports.

mod oracle;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraPose, Intrinsics};
use crate::image::DepthMap;
use crate::plan::Trajectory;
use crate::render::Scene;
pub use oracle::{LossTableOracle, NvsOracle, ReplayDirOracle, SyntheticOracle};

/// Depth counts as valid when finite and positive.
pub fn valid_depth(d: f64) -> bool {
    d.is_finite() && d > 0.0
}

/// Mean over frames of the per-frame mean absolute depth difference, taken
/// over pixels valid in both maps. Frames with no such pixel are left out;
/// `+inf` when no frame has one.
pub fn depth_alignment_loss(generated: &[DepthMap], reference: &[DepthMap]) -> Result<f64> {
    if generated.len() != reference.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} generated depth maps vs {} reference maps",
            generated.len(),
            reference.len()
        )));
    }
    if generated.is_empty() {
        return Err(Error::ShapeMismatch("no depth maps to compare".into()));
    }
    let mut sum = 0.0;
    let mut frames = 0usize;
    for (i, (g, r)) in generated.iter().zip(reference).enumerate() {
        if !g.same_shape(r) {
            return Err(Error::ShapeMismatch(format!(
                "frame {i}: {:?} vs {:?}",
                g.dims(),
                r.dims()
            )));
        }
        let mut acc = 0.0;
        let mut n = 0usize;
        for (a, b) in g.pixels().iter().zip(r.pixels()) {
            if valid_depth(*a) && valid_depth(*b) {
                acc += (a - b).abs();
                n += 1;
            }
        }
        if n > 0 {
            sum += acc / n as f64;
            frames += 1;
        }
    }
    Ok(if frames == 0 { f64::INFINITY } else { sum / frames as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Initial search interval.
    pub theta_min: f64,
    pub theta_max: f64,
    /// Global bounds every candidate is clamped to.
    pub clamp_min: f64,
    pub clamp_max: f64,
    /// Level resolutions; the first level evaluates the interval endpoints.
    pub resolutions: Vec<u32>,
    pub frames_evaluated: usize,
    /// Width in pixels of oracle and reference depth maps.
    pub eval_resolution: u32,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            theta_min: 0.1,
            theta_max: 2.0,
            clamp_min: 0.1,
            clamp_max: 2.0,
            resolutions: vec![1, 2, 4, 8, 16],
            frames_evaluated: 8,
            eval_resolution: 64,
        }
    }
}

impl ScheduleConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("schedule: {m}")));
        let finite = [self.theta_min, self.theta_max, self.clamp_min, self.clamp_max];
        if !finite.iter().all(|v| v.is_finite() && *v > 0.0) {
            return bad("interval and bounds must be positive and finite".into());
        }
        if self.theta_min >= self.theta_max {
            return bad(format!("theta_min {} must be below theta_max {}", self.theta_min, self.theta_max));
        }
        if self.clamp_min > self.theta_min || self.clamp_max < self.theta_max {
            return bad("clamp bounds must contain the search interval".into());
        }
        if self.resolutions.is_empty() || self.resolutions[0] == 0 {
            return bad("resolutions must be non-empty and positive".into());
        }
        if self.resolutions.windows(2).any(|w| w[0] >= w[1]) {
            return bad("resolutions must be strictly increasing".into());
        }
        if self.frames_evaluated == 0 || self.eval_resolution == 0 {
            return bad("frames_evaluated and eval_resolution must be positive".into());
        }
        Ok(())
    }

    /// Frame indices of a `frame_count`-frame trajectory used per candidate:
    /// `frames_evaluated` equally spaced, first and last included.
    pub fn frame_indices(&self, frame_count: usize) -> Vec<usize> {
        let m = self.frames_evaluated.min(frame_count);
        match m {
            0 => Vec::new(),
            1 => vec![0],
            _ => (0..m)
                .map(|i| ((i * (frame_count - 1)) as f64 / (m - 1) as f64).round() as usize)
                .collect(),
        }
    }

    pub fn eval_intrinsics(&self, intr: &Intrinsics) -> Intrinsics {
        let h = (self.eval_resolution as f64 * intr.height as f64 / intr.width as f64)
            .round()
            .max(1.0) as u32;
        intr.with_size(self.eval_resolution, h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub resolution: u32,
    /// Candidate set of this level, ascending.
    pub candidates: Vec<f64>,
    pub losses: Vec<f64>,
    /// Best candidate over all levels so far.
    pub selected: f64,
    pub selected_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub levels: Vec<LevelRecord>,
    pub theta_star: f64,
    pub loss_star: f64,
    /// Distinct parameter values sent to the oracle.
    pub oracle_calls: usize,
}

impl SearchTrace {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("trace serializes");
        s.push('\n');
        s
    }
}

fn memo_key(theta: f64) -> i64 {
    (theta * 1e9).round() as i64
}

/// Candidates are snapped to the 1e-9 grid so that e.g. 1.6 − 0.4 reads 1.2.
fn snap(theta: f64) -> f64 {
    memo_key(theta) as f64 / 1e9
}

/// Coarse-to-fine search driven by a batch loss evaluator. `eval` receives
/// the not-yet-evaluated candidates of a level in ascending order and
/// returns their losses in the same order.
pub fn coarse_to_fine(cfg: &ScheduleConfig, mut eval: impl FnMut(&[f64]) -> Result<Vec<f64>>) -> Result<(f64, SearchTrace)> {
    cfg.check()?;
    let l = cfg.theta_max - cfg.theta_min;
    let mut memo: BTreeMap<i64, f64> = BTreeMap::new();
    let mut best: Option<(f64, f64)> = None;
    let mut levels = Vec::with_capacity(cfg.resolutions.len());
    for (k, &r) in cfg.resolutions.iter().enumerate() {
        let mut cands: Vec<f64> = if k == 0 {
            vec![cfg.theta_min, cfg.theta_max]
        } else {
            let (center, _) = best.expect("level 1 sets a best candidate");
            let step = l / r as f64;
            vec![center - step, center, center + step]
        };
        for c in cands.iter_mut() {
            *c = snap(c.clamp(cfg.clamp_min, cfg.clamp_max));
        }
        cands.sort_by(f64::total_cmp);
        cands.dedup_by_key(|c| memo_key(*c));
        let fresh: Vec<f64> = cands.iter().copied().filter(|c| !memo.contains_key(&memo_key(*c))).collect();
        if !fresh.is_empty() {
            let losses = eval(&fresh)?;
            if losses.len() != fresh.len() {
                return Err(Error::LengthMismatch { left: fresh.len(), right: losses.len() });
            }
            for (c, loss) in fresh.iter().zip(losses) {
                memo.insert(memo_key(*c), loss);
            }
        }
        let losses: Vec<f64> = cands.iter().map(|c| memo[&memo_key(*c)]).collect();
        for (&c, &loss) in cands.iter().zip(&losses) {
            let better = match best {
                None => true,
                Some((bt, bl)) => loss < bl || (loss == bl && c < bt),
            };
            if better {
                best = Some((c, loss));
            }
        }
        let (selected, selected_loss) = best.expect("at least one candidate per level");
        levels.push(LevelRecord {
            resolution: r,
            candidates: cands,
            losses,
            selected,
            selected_loss,
        });
    }
    let (theta_star, loss_star) = best.expect("schedule is non-empty");
    Ok((
        theta_star,
        SearchTrace {
            levels,
            theta_star,
            loss_star,
            oracle_calls: memo.len(),
        },
    ))
}

/// Search the camera scale that best aligns oracle depth with proxy depth
/// rendered at the trajectory's evaluated frames.
pub fn bisection_search(oracle: &dyn NvsOracle, trajectory: &Trajectory, reference: &Scene, cfg: &ScheduleConfig) -> Result<(f64, SearchTrace)> {
    cfg.check()?;
    let frames = cfg.frame_indices(trajectory.poses.len());
    if frames.is_empty() {
        return Err(Error::DegenerateInput("trajectory has no frames".into()));
    }
    let intr = cfg.eval_intrinsics(&trajectory.intrinsics);
    let gt: Vec<DepthMap> = frames
        .iter()
        .map(|&i| depth_at(reference, &trajectory.poses[i], &intr))
        .collect();
    let score = |theta: f64| -> Result<f64> {
        let generated = oracle.generate(theta, trajectory, &frames, &intr)?;
        if generated.len() != frames.len() {
            return Err(Error::OracleFailure {
                theta,
                message: format!("returned {} depth maps, expected {}", generated.len(), frames.len()),
            });
        }
        depth_alignment_loss(&generated, &gt).map_err(|e| Error::OracleFailure {
            theta,
            message: e.to_string(),
        })
    };
    coarse_to_fine(cfg, |cands| {
        if oracle.concurrent() {
            cands.par_iter().map(|&t| score(t)).collect()
        } else {
            cands.iter().map(|&t| score(t)).collect()
        }
    })
}

pub(crate) fn depth_at(scene: &Scene, pose: &CameraPose, intr: &Intrinsics) -> DepthMap {
    use crate::render::{Channel, RenderTarget};
    scene
        .render(&RenderTarget::new(*intr, *pose, &[Channel::Depth]))
        .expect("depth channel requested")
        .depth
        .expect("depth channel rendered")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub translation_errors_m: Vec<f64>,
    pub rotation_errors_deg: Vec<f64>,
    pub translation_rmse_m: f64,
    pub translation_median_m: f64,
    pub rotation_rmse_deg: f64,
    pub rotation_median_deg: f64,
}

fn rmse(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Per-frame translation (meters) and geodesic rotation (degrees) errors of
/// estimated poses against the target trajectory.
pub fn verify_alignment(target: &[CameraPose], estimated: &[CameraPose]) -> Result<AlignmentReport> {
    if target.len() != estimated.len() {
        return Err(Error::LengthMismatch { left: target.len(), right: estimated.len() });
    }
    let t: Vec<f64> = target
        .iter()
        .zip(estimated)
        .map(|(a, b)| (a.position - b.position).norm())
        .collect();
    let r: Vec<f64> = target
        .iter()
        .zip(estimated)
        .map(|(a, b)| a.angle_to(b).to_degrees())
        .collect();
    Ok(AlignmentReport {
        translation_rmse_m: rmse(&t),
        translation_median_m: median(&t),
        rotation_rmse_deg: rmse(&r),
        rotation_median_deg: median(&r),
        translation_errors_m: t,
        rotation_errors_deg: r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;
    use nalgebra::{UnitQuaternion, Vector3};

    #[test]
    fn loss_identities() {
        let a = Image::from_fn(4, 3, |x, y| 1.0 + (x + y) as f64);
        let b = a.map(|d| d + 0.5);
        assert_eq!(depth_alignment_loss(&[a.clone(), a.clone()], &[a.clone(), a.clone()]).unwrap(), 0.0);
        assert_eq!(depth_alignment_loss(&[b.clone(), b], &[a.clone(), a.clone()]).unwrap(), 0.5);
        let inf = Image::filled(4, 3, f64::INFINITY);
        assert_eq!(depth_alignment_loss(&[inf], &[a.clone()]).unwrap(), f64::INFINITY);
        assert!(depth_alignment_loss(&[Image::filled(2, 2, 1.0)], &[a]).is_err());
    }

    #[test]
    fn v_shaped_loss() {
        let cfg = ScheduleConfig::default();
        let (theta, trace) = coarse_to_fine(&cfg, |c| Ok(c.iter().map(|t| (t - 1.0).abs()).collect())).unwrap();
        assert!((theta - 1.0).abs() <= 1.9 / 16.0, "{theta}");
        assert!(trace.oracle_calls <= 2 + 2 * 4);
        let sel: Vec<f64> = trace.levels.iter().map(|l| l.selected_loss).collect();
        assert!(sel.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn constant_loss_picks_theta_min() {
        let (theta, _) = coarse_to_fine(&ScheduleConfig::default(), |c| Ok(vec![1.0; c.len()])).unwrap();
        assert_eq!(theta, 0.1);
    }

    #[test]
    fn bad_schedules() {
        let mut cfg = ScheduleConfig { resolutions: vec![1, 4, 2], ..Default::default() };
        assert!(coarse_to_fine(&cfg, |c| Ok(vec![0.0; c.len()])).is_err());
        cfg = ScheduleConfig { theta_min: 2.0, theta_max: 1.0, ..Default::default() };
        assert!(matches!(coarse_to_fine(&cfg, |c| Ok(vec![0.0; c.len()])), Err(Error::Config(_))));
    }

    #[test]
    fn oracle_failure_propagates() {
        let err = coarse_to_fine(&ScheduleConfig::default(), |c| {
            Err(Error::OracleFailure { theta: c[0], message: "boom".into() })
        })
        .unwrap_err();
        assert!(matches!(err, Error::OracleFailure { theta, .. } if theta == 0.1));
    }

    #[test]
    fn frame_subset() {
        let cfg = ScheduleConfig::default();
        assert_eq!(cfg.frame_indices(42), vec![0, 6, 12, 18, 23, 29, 35, 41]);
        assert_eq!(cfg.frame_indices(3), vec![0, 1, 2]);
    }

    #[test]
    fn alignment_report() {
        let poses: Vec<CameraPose> = (0..5)
            .map(|i| CameraPose::from_yaw_pitch(Vector3::new(i as f64, 1.0, 1.5), 0.2 * i as f64, 0.0))
            .collect();
        let same = verify_alignment(&poses, &poses).unwrap();
        assert_eq!(same.translation_rmse_m, 0.0);
        assert_eq!(same.rotation_rmse_deg, 0.0);
        assert_eq!(same.rotation_median_deg, 0.0);
        let shifted: Vec<CameraPose> = poses
            .iter()
            .map(|p| CameraPose::new(p.rotation, p.position + Vector3::new(0.05, 0.0, 0.0)))
            .collect();
        let r = verify_alignment(&poses, &shifted).unwrap();
        assert!((r.translation_rmse_m - 0.05).abs() < 1e-12);
        assert!((r.translation_median_m - 0.05).abs() < 1e-12);
        let rolled: Vec<CameraPose> = poses
            .iter()
            .map(|p| CameraPose::new(p.rotation * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 2f64.to_radians()), p.position))
            .collect();
        let r = verify_alignment(&poses, &rolled).unwrap();
        assert!((r.rotation_rmse_deg - 2.0).abs() < 1e-9);
        assert!(matches!(verify_alignment(&poses, &poses[..2]), Err(Error::LengthMismatch { .. })));
    }
}
