//! Depth backprojection, multi-frame point fusion, point rasterization and
//! depth agreement metrics.

mod ply;

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::valid_depth;
use crate::error::{Error, Result};
use crate::geometry::{pixel_center_ray, CameraPose, Intrinsics};
use crate::image::{DepthMap, Image, InstanceMap, RgbImage, SemanticMap};
use crate::render::Scene;
use crate::scene::SemanticId;
pub use ply::{read_ply, write_ply};

/// Point cloud with optional per-point attributes. Attribute vectors, when
/// present, have one entry per position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vector3<f64>>,
    /// RGB in [0, 1].
    pub colors: Option<Vec<[f64; 3]>>,
    pub semantic: Option<Vec<SemanticId>>,
    pub instance: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Points whose `keep` flag is set, in order.
    pub fn filter(&self, keep: &[bool]) -> PointCloud {
        fn pick<T: Copy>(v: &[T], keep: &[bool]) -> Vec<T> {
            v.iter().zip(keep).filter(|(_, &k)| k).map(|(x, _)| *x).collect()
        }
        PointCloud {
            positions: pick(&self.positions, keep),
            colors: self.colors.as_deref().map(|c| pick(c, keep)),
            semantic: self.semantic.as_deref().map(|c| pick(c, keep)),
            instance: self.instance.as_deref().map(|c| pick(c, keep)),
        }
    }

    /// Append `other`. An attribute survives only if both clouds carry it
    /// (or `self` is empty).
    pub fn extend(&mut self, other: PointCloud) {
        fn join<T>(a: &mut Option<Vec<T>>, b: Option<Vec<T>>, a_empty: bool) {
            match (a.as_mut(), b) {
                (Some(x), Some(y)) => x.extend(y),
                (None, Some(y)) if a_empty => *a = Some(y),
                _ => *a = None,
            }
        }
        let empty = self.is_empty();
        join(&mut self.colors, other.colors, empty);
        join(&mut self.semantic, other.semantic, empty);
        join(&mut self.instance, other.instance, empty);
        self.positions.extend(other.positions);
    }

    fn check(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            self.colors.as_ref().map(Vec::len),
            self.semantic.as_ref().map(Vec::len),
            self.instance.as_ref().map(Vec::len),
        ];
        if let Some(bad) = lens.iter().flatten().find(|&&l| l != n) {
            return Err(Error::LengthMismatch { left: n, right: *bad });
        }
        Ok(())
    }
}

/// One posed depth frame with optional per-pixel attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub depth: DepthMap,
    pub intrinsics: Intrinsics,
    pub pose: CameraPose,
    pub color: Option<RgbImage>,
    pub semantic: Option<SemanticMap>,
    pub instance: Option<InstanceMap>,
}

impl Frame {
    pub fn new(depth: DepthMap, intrinsics: Intrinsics, pose: CameraPose) -> Self {
        Frame {
            depth,
            intrinsics,
            pose,
            color: None,
            semantic: None,
            instance: None,
        }
    }

    fn check(&self) -> Result<()> {
        let dims = (self.intrinsics.width as usize, self.intrinsics.height as usize);
        let mismatch = |what: &str, d: (usize, usize)| {
            Err(Error::ShapeMismatch(format!("{what} map is {d:?}, depth is {:?}", self.depth.dims())))
        };
        if self.depth.dims() != dims {
            return Err(Error::ShapeMismatch(format!(
                "depth map is {:?}, intrinsics are {}x{}",
                self.depth.dims(),
                dims.0,
                dims.1
            )));
        }
        if let Some(c) = &self.color {
            if !c.same_shape(&self.depth) {
                return mismatch("color", c.dims());
            }
        }
        if let Some(s) = &self.semantic {
            if !s.same_shape(&self.depth) {
                return mismatch("semantic", s.dims());
            }
        }
        if let Some(i) = &self.instance {
            if !i.same_shape(&self.depth) {
                return mismatch("instance", i.dims());
            }
        }
        Ok(())
    }
}

/// One point per valid pixel on a `stride` grid, at `origin + depth * ray`
/// (depth is distance along the ray).
pub fn backproject(frame: &Frame, stride: usize) -> Result<PointCloud> {
    frame.check()?;
    let stride = stride.max(1);
    let (w, h) = frame.depth.dims();
    let mut cloud = PointCloud {
        colors: frame.color.as_ref().map(|_| Vec::new()),
        semantic: frame.semantic.as_ref().map(|_| Vec::new()),
        instance: frame.instance.as_ref().map(|_| Vec::new()),
        ..Default::default()
    };
    for j in (0..h).step_by(stride) {
        for i in (0..w).step_by(stride) {
            let d = frame.depth.get(i, j);
            if !valid_depth(d) {
                continue;
            }
            let ray = pixel_center_ray(&frame.intrinsics, &frame.pose, i, j);
            cloud.positions.push(ray.at(d));
            if let (Some(v), Some(img)) = (cloud.colors.as_mut(), &frame.color) {
                v.push(img.get(i, j));
            }
            if let (Some(v), Some(img)) = (cloud.semantic.as_mut(), &frame.semantic) {
                v.push(img.get(i, j));
            }
            if let (Some(v), Some(img)) = (cloud.instance.as_mut(), &frame.instance) {
                v.push(img.get(i, j));
            }
        }
    }
    Ok(cloud)
}

/// Backproject every frame and merge. With `voxel_size > 0` the result is
/// voxel-downsampled; otherwise it is the plain concatenation in frame order.
pub fn fuse_frames(frames: &[Frame], stride: usize, voxel_size: f64) -> Result<PointCloud> {
    if frames.is_empty() {
        return Err(Error::DegenerateInput("no frames to fuse".into()));
    }
    let parts: Vec<PointCloud> = frames
        .par_iter()
        .map(|f| backproject(f, stride))
        .collect::<Result<_>>()?;
    let mut all = PointCloud::default();
    for p in parts {
        all.extend(p);
    }
    if voxel_size > 0.0 {
        voxel_downsample(&all, voxel_size)
    } else {
        Ok(all)
    }
}

#[derive(Default)]
struct VoxelAcc {
    sum: Vector3<f64>,
    color: [f64; 3],
    n: usize,
    semantic: BTreeMap<u8, usize>,
    instance: BTreeMap<u32, usize>,
}

/// Most frequent key, ties to the smaller one.
fn majority<K: Copy + Ord>(votes: &BTreeMap<K, usize>) -> K {
    let mut best: Option<(K, usize)> = None;
    for (&k, &n) in votes {
        if best.map_or(true, |(_, bn)| n > bn) {
            best = Some((k, n));
        }
    }
    best.expect("voxel holds at least one point").0
}

/// One point per occupied voxel of edge `voxel_size`: the centroid, mean
/// color and majority labels. Output is in ascending voxel index order.
pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64) -> Result<PointCloud> {
    cloud.check()?;
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(Error::DegenerateInput(format!("voxel size {voxel_size} must be positive")));
    }
    let mut voxels: BTreeMap<[i64; 3], VoxelAcc> = BTreeMap::new();
    for (k, p) in cloud.positions.iter().enumerate() {
        let key = [0, 1, 2].map(|a| (p[a] / voxel_size).floor() as i64);
        let acc = voxels.entry(key).or_default();
        acc.sum += p;
        acc.n += 1;
        if let Some(c) = &cloud.colors {
            for a in 0..3 {
                acc.color[a] += c[k][a];
            }
        }
        if let Some(s) = &cloud.semantic {
            *acc.semantic.entry(s[k].id()).or_default() += 1;
        }
        if let Some(i) = &cloud.instance {
            *acc.instance.entry(i[k]).or_default() += 1;
        }
    }
    let mut out = PointCloud {
        positions: Vec::with_capacity(voxels.len()),
        colors: cloud.colors.as_ref().map(|_| Vec::with_capacity(voxels.len())),
        semantic: cloud.semantic.as_ref().map(|_| Vec::with_capacity(voxels.len())),
        instance: cloud.instance.as_ref().map(|_| Vec::with_capacity(voxels.len())),
    };
    for acc in voxels.values() {
        let n = acc.n as f64;
        out.positions.push(acc.sum / n);
        if let Some(c) = out.colors.as_mut() {
            c.push(acc.color.map(|v| v / n));
        }
        if let Some(s) = out.semantic.as_mut() {
            s.push(SemanticId::new(majority(&acc.semantic)).expect("labels come from valid ids"));
        }
        if let Some(i) = out.instance.as_mut() {
            i.push(majority(&acc.instance));
        }
    }
    Ok(out)
}

/// Depth image of a point cloud: each point lands in the pixel containing
/// its projection, and each pixel keeps the nearest point distance.
pub fn rasterize_points(cloud: &PointCloud, intr: &Intrinsics, pose: &CameraPose) -> DepthMap {
    let (w, h) = (intr.width as usize, intr.height as usize);
    let mut out = Image::filled(w, h, f64::INFINITY);
    for p in &cloud.positions {
        let Some((u, v)) = intr.project_camera(&pose.to_camera(p)) else {
            continue;
        };
        if !(u >= 0.0 && v >= 0.0 && u < w as f64 && v < h as f64) {
            continue;
        }
        let (i, j) = (u as usize, v as usize);
        let d = (p - pose.position).norm();
        if d < out.get(i, j) {
            out.set(i, j, d);
        }
    }
    out
}

/// Depth of a point cloud along each pixel ray: the nearest point whose
/// direction lies inside a cone one pixel wide around the pixel center ray.
pub fn point_depth_along_rays(cloud: &PointCloud, intr: &Intrinsics, pose: &CameraPose) -> DepthMap {
    let (w, h) = (intr.width as usize, intr.height as usize);
    let tol = (0.5 / intr.focal()).atan();
    let cos_tol = tol.cos();
    let rays: Vec<Vector3<f64>> = (0..h)
        .flat_map(|j| (0..w).map(move |i| (i, j)))
        .map(|(i, j)| pixel_center_ray(intr, pose, i, j).dir)
        .collect();
    let mut out = Image::filled(w, h, f64::INFINITY);
    for p in &cloud.positions {
        let Some((u, v)) = intr.project_camera(&pose.to_camera(p)) else {
            continue;
        };
        if !(u > -3.0 && v > -3.0 && u < w as f64 + 3.0 && v < h as f64 + 3.0) {
            continue;
        }
        let offset = p - pose.position;
        let d = offset.norm();
        if !(d > 0.0) {
            continue;
        }
        let dir = offset / d;
        let (ci, cj) = (u.floor() as i64, v.floor() as i64);
        for j in (cj - 2).max(0)..=(cj + 2).min(h as i64 - 1) {
            for i in (ci - 2).max(0)..=(ci + 2).min(w as i64 - 1) {
                let (i, j) = (i as usize, j as usize);
                if rays[j * w + i].dot(&dir) >= cos_tol && d < out.get(i, j) {
                    out.set(i, j, d);
                }
            }
        }
    }
    out
}

/// Reconstruction depth to compare with proxy renders.
#[derive(Debug, Clone, Copy)]
pub enum ReconDepth<'a> {
    /// One depth map per evaluation pose.
    Maps(&'a [DepthMap]),
    Cloud(&'a PointCloud),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthReport {
    pub rmse_m: f64,
    pub abs_rel: f64,
    pub pixels: usize,
}

/// RMSE and AbsRel of reconstruction depth against proxy depth, pooled over
/// every pixel valid in both across all poses.
pub fn depth_alignment_report(scene: &Scene, recon: ReconDepth<'_>, poses: &[CameraPose], intr: &Intrinsics) -> Result<DepthReport> {
    if let ReconDepth::Maps(maps) = recon {
        if maps.len() != poses.len() {
            return Err(Error::LengthMismatch { left: maps.len(), right: poses.len() });
        }
    }
    let per_pose: Vec<(f64, f64, usize)> = poses
        .par_iter()
        .enumerate()
        .map(|(k, pose)| {
            let gt = crate::align::depth_at(scene, pose, intr);
            let d = match recon {
                ReconDepth::Maps(maps) => maps[k].clone(),
                ReconDepth::Cloud(c) => point_depth_along_rays(c, intr, pose),
            };
            if !d.same_shape(&gt) {
                return Err(Error::ShapeMismatch(format!("pose {k}: {:?} vs {:?}", d.dims(), gt.dims())));
            }
            let (mut sq, mut rel, mut n) = (0.0, 0.0, 0usize);
            for (a, b) in d.pixels().iter().zip(gt.pixels()) {
                if valid_depth(*a) && valid_depth(*b) {
                    let e = a - b;
                    sq += e * e;
                    rel += e.abs() / b;
                    n += 1;
                }
            }
            Ok((sq, rel, n))
        })
        .collect::<Result<_>>()?;
    // Summed in pose order so the result does not depend on thread count.
    let (mut sq, mut rel, mut n) = (0.0, 0.0, 0usize);
    for (s, r, c) in per_pose {
        sq += s;
        rel += r;
        n += c;
    }
    if n == 0 {
        return Err(Error::EmptyOverlap);
    }
    Ok(DepthReport {
        rmse_m: (sq / n as f64).sqrt(),
        abs_rel: rel / n as f64,
        pixels: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::{Channel, RenderTarget};
    use crate::scene::{Room, SceneLayout};
    use nalgebra::UnitQuaternion;

    fn room() -> SceneLayout {
        SceneLayout::new("r", vec![Room::rectangle([-2.0, -1.5], [2.5, 2.0], 0.0, 2.7, 0.1)])
    }

    fn rendered(scene: &Scene, pose: CameraPose, size: u32) -> Frame {
        let intr = Intrinsics::square(size, 72.0);
        let out = scene
            .render(&RenderTarget::new(intr, pose, &[Channel::Depth, Channel::Semantic, Channel::Instance]))
            .unwrap();
        Frame {
            semantic: out.semantic,
            instance: out.instance,
            ..Frame::new(out.depth.unwrap(), intr, pose)
        }
    }

    #[test]
    fn single_pixel() {
        let f = Frame::new(Image::filled(1, 1, 2.0), Intrinsics::square(1, 60.0), CameraPose::identity());
        let c = backproject(&f, 1).unwrap();
        assert_eq!(c.positions, vec![Vector3::new(2.0, 0.0, 0.0)]);
    }

    #[test]
    fn shape_mismatch() {
        let mut f = Frame::new(Image::filled(4, 4, 2.0), Intrinsics::square(4, 60.0), CameraPose::identity());
        f.semantic = Some(Image::filled(3, 4, SemanticId::WALL));
        assert!(matches!(backproject(&f, 1), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn wall_points_are_planar() {
        let scene = Scene::new(&room());
        let pose = CameraPose::from_yaw_pitch(Vector3::new(0.0, 0.0, 1.3), 0.0, 0.0);
        let c = backproject(&rendered(&scene, pose, 48), 1).unwrap();
        let sem = c.semantic.as_ref().unwrap();
        let walls: Vec<_> = c.positions.iter().zip(sem).filter(|(p, s)| **s == SemanticId::WALL && p.x > 2.0 && p.y.abs() < 1.0).collect();
        assert!(!walls.is_empty());
        assert!(walls.iter().all(|(p, _)| (p.x - 2.5).abs() < 1e-6));
    }

    #[test]
    fn round_trip_same_view() {
        let scene = Scene::new(&room());
        let pose = CameraPose::from_yaw_pitch(Vector3::new(0.2, 0.1, 1.4), 0.7, -0.2);
        let f = rendered(&scene, pose, 64);
        let cloud = backproject(&f, 1).unwrap();
        let back = rasterize_points(&cloud, &f.intrinsics, &pose);
        for (a, b) in back.pixels().iter().zip(f.depth.pixels()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn duplicate_frames_dedup() {
        let scene = Scene::new(&room());
        let pose = CameraPose::from_yaw_pitch(Vector3::new(0.0, 0.0, 1.3), 2.0, 0.0);
        let f = rendered(&scene, pose, 32);
        let one = fuse_frames(std::slice::from_ref(&f), 1, 0.01).unwrap();
        let two = fuse_frames(&[f.clone(), f.clone()], 1, 0.01).unwrap();
        assert_eq!(one, two);
        let concat = fuse_frames(&[f.clone(), f], 1, 0.0).unwrap();
        assert_eq!(concat.len(), 2 * 32 * 32);
        assert!(one.len() <= 32 * 32);
    }

    #[test]
    fn majority_ties_to_lower_id() {
        let cloud = PointCloud {
            positions: vec![Vector3::new(0.1, 0.1, 0.1), Vector3::new(0.2, 0.2, 0.2), Vector3::new(0.3, 0.3, 0.3)],
            semantic: Some(vec![SemanticId::TABLE, SemanticId::WALL, SemanticId::TABLE]),
            instance: Some(vec![9, 4, 3]),
            colors: None,
        };
        let out = voxel_downsample(&cloud, 1.0).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.semantic.unwrap(), vec![SemanticId::TABLE]);
        assert_eq!(out.instance.unwrap(), vec![3]);
        assert!((out.positions[0] - Vector3::repeat(0.2)).norm() < 1e-15);
    }

    #[test]
    fn rigid_equivariance() {
        let scene = Scene::new(&room());
        let poses = [
            CameraPose::from_yaw_pitch(Vector3::new(0.0, 0.0, 1.3), 0.4, 0.1),
            CameraPose::from_yaw_pitch(Vector3::new(0.5, -0.3, 1.6), 2.4, -0.3),
        ];
        let frames: Vec<Frame> = poses.iter().map(|p| rendered(&scene, *p, 24)).collect();
        let rot = UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1);
        let tr = Vector3::new(3.0, -1.0, 0.5);
        let moved: Vec<Frame> = frames
            .iter()
            .map(|f| Frame { pose: f.pose.transformed(&rot, &tr), ..f.clone() })
            .collect();
        let a = fuse_frames(&frames, 2, 0.0).unwrap();
        let b = fuse_frames(&moved, 2, 0.0).unwrap();
        assert_eq!(a.len(), b.len());
        for (p, q) in a.positions.iter().zip(&b.positions) {
            assert!((rot * p + tr - q).norm() < 1e-9);
        }
    }

    #[test]
    fn report_identities() {
        let scene = Scene::new(&room());
        let intr = Intrinsics::square(24, 72.0);
        let poses = [CameraPose::from_yaw_pitch(Vector3::new(0.0, 0.0, 1.3), 0.4, 0.1)];
        let gt: Vec<DepthMap> = poses.iter().map(|p| crate::align::depth_at(&scene, p, &intr)).collect();
        let r = depth_alignment_report(&scene, ReconDepth::Maps(&gt), &poses, &intr).unwrap();
        assert_eq!((r.rmse_m, r.abs_rel), (0.0, 0.0));
        let scaled: Vec<DepthMap> = gt.iter().map(|d| d.map(|v| v * 1.1)).collect();
        let r = depth_alignment_report(&scene, ReconDepth::Maps(&scaled), &poses, &intr).unwrap();
        assert!((r.abs_rel - 0.1).abs() < 1e-9);
        let void = vec![Image::filled(24, 24, f64::INFINITY)];
        assert!(matches!(
            depth_alignment_report(&scene, ReconDepth::Maps(&void), &poses, &intr),
            Err(Error::EmptyOverlap)
        ));
    }

    #[test]
    fn cloud_report_is_zero_for_own_points() {
        let scene = Scene::new(&room());
        let pose = CameraPose::from_yaw_pitch(Vector3::new(0.0, 0.0, 1.3), 0.4, 0.1);
        let f = rendered(&scene, pose, 24);
        let cloud = backproject(&f, 1).unwrap();
        let r = depth_alignment_report(&scene, ReconDepth::Cloud(&cloud), &[pose], &f.intrinsics).unwrap();
        assert!(r.rmse_m < 1e-9, "{r:?}");
        assert!(r.pixels >= 24 * 24);
    }
}
