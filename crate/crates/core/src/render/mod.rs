//! Exact ray-cast rendering of depth, semantic, instance and normal images
//! from a scene layout.
//!
//! Depth is the Euclidean distance along the view ray, not planar z-depth,
//! so cubemap faces agree wherever they overlap. Pixels that hit nothing get
//! `+inf`, void and instance 0.

mod bvh;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pixel_center_ray, CameraPose, Cubemap, CubemapRig, Intrinsics, Ray};
use crate::image::{DepthMap, Image, InstanceMap, SemanticMap};
use crate::scene::polygon::{self, Point2};
use crate::scene::{
    wall_pieces, Obb, SceneLayout, SemanticId, CEILING_INSTANCE, FLOOR_INSTANCE, WALL_INSTANCE,
};
pub use bvh::Bvh;

/// Resolution of the clearance probe along the image width.
pub const PROBE_SIZE: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    #[serde(rename = "depth_m")]
    Depth,
    #[serde(rename = "semantic_id")]
    Semantic,
    #[serde(rename = "instance_id")]
    Instance,
    Normal,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Depth, Channel::Semantic, Channel::Instance, Channel::Normal];
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderTarget {
    pub intrinsics: Intrinsics,
    pub pose: CameraPose,
    pub channels: Vec<Channel>,
}

impl RenderTarget {
    pub fn new(intrinsics: Intrinsics, pose: CameraPose, channels: &[Channel]) -> Self {
        RenderTarget {
            intrinsics,
            pose,
            channels: channels.to_vec(),
        }
    }

    fn has(&self, c: Channel) -> bool {
        self.channels.contains(&c)
    }
}

/// Images for the requested channels; the others are `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RenderOutput {
    pub depth: Option<DepthMap>,
    pub semantic: Option<SemanticMap>,
    pub instance: Option<InstanceMap>,
    pub normal: Option<Image<[f64; 3]>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CubemapRender {
    pub depth: Option<Cubemap<f64>>,
    pub semantic: Option<Cubemap<SemanticId>>,
    pub instance: Option<Cubemap<u32>>,
    pub normal: Option<Cubemap<[f64; 3]>>,
}

/// Nearest surface along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub semantic: SemanticId,
    pub instance: u32,
    /// Unit normal facing the ray origin.
    pub normal: Vector3<f64>,
}

impl Hit {
    pub const MISS: Hit = Hit {
        t: f64::INFINITY,
        semantic: SemanticId::VOID,
        instance: 0,
        normal: Vector3::new(0.0, 0.0, 0.0),
    };
}

#[derive(Debug, Clone)]
enum Shape {
    Box(Obb),
    /// Horizontal prism of a floor polygon between `z0` and `z1`.
    Slab { poly: Vec<Point2>, z0: f64, z1: f64 },
}

#[derive(Debug, Clone)]
struct Primitive {
    shape: Shape,
    semantic: SemanticId,
    instance: u32,
}

/// Ray entry distance and outward face normal for a solid box. A ray that
/// starts inside the box hits at `t = 0` with the normal facing back along
/// the ray.
pub fn ray_obb(origin: &Vector3<f64>, dir: &Vector3<f64>, obb: &Obb) -> Option<(f64, Vector3<f64>)> {
    let rt: Matrix3<f64> = obb.axes.transpose();
    let o = rt * (origin - obb.center);
    let d = rt * dir;
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    let mut axis = 0;
    for k in 0..3 {
        let h = obb.half[k];
        if d[k] == 0.0 {
            if o[k].abs() > h {
                return None;
            }
            continue;
        }
        let a = (-h - o[k]) / d[k];
        let b = (h - o[k]) / d[k];
        let (near, far) = if a < b { (a, b) } else { (b, a) };
        if near > t0 {
            t0 = near;
            axis = k;
        }
        t1 = t1.min(far);
    }
    if t1 < t0 || t1 < 0.0 {
        return None;
    }
    if t0 < 0.0 {
        return Some((0.0, -dir));
    }
    let sign = if d[axis] > 0.0 { -1.0 } else { 1.0 };
    Some((t0, obb.axes.column(axis) * sign))
}

fn ray_slab(origin: &Vector3<f64>, dir: &Vector3<f64>, poly: &[Point2], z0: f64, z1: f64) -> Option<(f64, Vector3<f64>)> {
    let inside = |x: f64, y: f64| polygon::contains(poly, Point2::new(x, y));
    if origin.z >= z0 && origin.z <= z1 {
        return inside(origin.x, origin.y).then(|| (0.0, -dir));
    }
    let (z, n) = if origin.z < z0 { (z0, -1.0) } else { (z1, 1.0) };
    if dir.z == 0.0 {
        return None;
    }
    let t = (z - origin.z) / dir.z;
    if t < 0.0 {
        return None;
    }
    let p = origin + dir * t;
    inside(p.x, p.y).then(|| (t, Vector3::new(0.0, 0.0, n)))
}

impl Shape {
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        match self {
            Shape::Box(obb) => ray_obb(origin, dir, obb),
            Shape::Slab { poly, z0, z1 } => ray_slab(origin, dir, poly, *z0, *z1),
        }
    }

    fn aabb(&self) -> (Vector3<f64>, Vector3<f64>) {
        match self {
            Shape::Box(obb) => obb.aabb(),
            Shape::Slab { poly, z0, z1 } => {
                let (lo, hi) = polygon::bounds(poly);
                (Vector3::new(lo.x, lo.y, *z0), Vector3::new(hi.x, hi.y, *z1))
            }
        }
    }

    fn distance_to(&self, p: &Vector3<f64>) -> f64 {
        match self {
            Shape::Box(obb) => obb.distance_to(p),
            Shape::Slab { poly, z0, z1 } => {
                let dz = (z0 - p.z).max(p.z - z1).max(0.0);
                let q = Point2::new(p.x, p.y);
                let dxy = if polygon::contains(poly, q) {
                    0.0
                } else {
                    polygon::distance_to_boundary(poly, q)
                };
                dz.hypot(dxy)
            }
        }
    }
}

/// A layout compiled for ray casting. Build once, render many views.
#[derive(Debug, Clone)]
pub struct Scene {
    prims: Vec<Primitive>,
    boxes: Vec<(Vector3<f64>, Vector3<f64>)>,
    bvh: Bvh,
}

impl Scene {
    pub fn new(layout: &SceneLayout) -> Scene {
        let mut prims = Vec::new();
        for piece in wall_pieces(layout) {
            prims.push(Primitive {
                shape: Shape::Box(piece.obb),
                semantic: SemanticId::WALL,
                instance: WALL_INSTANCE,
            });
        }
        for room in &layout.rooms {
            let t = room.wall_thickness;
            let poly = room.polygon_ccw();
            prims.push(Primitive {
                shape: Shape::Slab {
                    poly: poly.clone(),
                    z0: room.floor_z - t,
                    z1: room.floor_z,
                },
                semantic: SemanticId::FLOOR,
                instance: FLOOR_INSTANCE,
            });
            prims.push(Primitive {
                shape: Shape::Slab {
                    poly,
                    z0: room.ceiling_z,
                    z1: room.ceiling_z + t,
                },
                semantic: SemanticId::CEILING,
                instance: CEILING_INSTANCE,
            });
        }
        for o in &layout.objects {
            prims.push(Primitive {
                shape: Shape::Box(o.pose.obb()),
                semantic: o.label(),
                instance: o.instance_id,
            });
        }
        for c in &layout.connectors {
            if let Some(label) = c.kind.label() {
                prims.push(Primitive {
                    shape: Shape::Box(c.pose.obb()),
                    semantic: label,
                    instance: c.instance_id,
                });
            }
        }
        let boxes: Vec<_> = prims.iter().map(|p| p.shape.aabb()).collect();
        let bvh = Bvh::build(&boxes);
        Scene { prims, boxes, bvh }
    }

    /// Nearest hit along a ray with unit direction. Equal distances resolve
    /// to the primitive built first.
    pub fn intersect(&self, ray: &Ray) -> Hit {
        let mut best: Option<(f64, usize, Vector3<f64>)> = None;
        self.bvh.traverse(&ray.origin, &ray.dir, f64::INFINITY, |i| {
            if let Some((t, n)) = self.prims[i].shape.intersect(&ray.origin, &ray.dir) {
                let better = match best {
                    None => true,
                    Some((bt, bi, _)) => t < bt || (t == bt && i < bi),
                };
                if better {
                    best = Some((t, i, n));
                }
            }
            best.map_or(f64::INFINITY, |b| b.0)
        });
        match best {
            None => Hit::MISS,
            Some((t, i, normal)) => Hit {
                t,
                semantic: self.prims[i].semantic,
                instance: self.prims[i].instance,
                normal,
            },
        }
    }

    fn hits(&self, intr: &Intrinsics, pose: &CameraPose) -> Vec<Hit> {
        let (w, h) = (intr.width as usize, intr.height as usize);
        let rows: Vec<Vec<Hit>> = (0..h)
            .into_par_iter()
            .map(|j| {
                (0..w)
                    .map(|i| self.intersect(&pixel_center_ray(intr, pose, i, j)))
                    .collect()
            })
            .collect();
        rows.concat()
    }

    pub fn render(&self, target: &RenderTarget) -> Result<RenderOutput> {
        if target.channels.is_empty() {
            return Err(Error::DegenerateInput("render target requests no channels".into()));
        }
        let intr = &target.intrinsics;
        intr.check()?;
        let hits = self.hits(intr, &target.pose);
        let (w, h) = (intr.width as usize, intr.height as usize);
        let image = |f: &dyn Fn(&Hit) -> _| Image::from_vec(w, h, hits.iter().map(f).collect());
        let mut out = RenderOutput::default();
        if target.has(Channel::Depth) {
            out.depth = Some(Image::from_vec(w, h, hits.iter().map(|x| x.t).collect())?);
        }
        if target.has(Channel::Semantic) {
            out.semantic = Some(Image::from_vec(w, h, hits.iter().map(|x| x.semantic).collect())?);
        }
        if target.has(Channel::Instance) {
            out.instance = Some(Image::from_vec(w, h, hits.iter().map(|x| x.instance).collect())?);
        }
        if target.has(Channel::Normal) {
            out.normal = Some(image(&|x: &Hit| [x.normal.x, x.normal.y, x.normal.z])?);
        }
        Ok(out)
    }

    /// Minimum rendered depth at `intr`'s own resolution.
    pub fn min_depth(&self, pose: &CameraPose, intr: &Intrinsics) -> f64 {
        self.hits(intr, pose)
            .iter()
            .map(|h| h.t)
            .fold(f64::INFINITY, f64::min)
    }

    /// Minimum depth over a reduced render, [`PROBE_SIZE`] pixels wide with
    /// the same field of view and aspect ratio.
    pub fn min_depth_probe(&self, pose: &CameraPose, intr: &Intrinsics) -> f64 {
        self.min_depth(pose, &probe_intrinsics(intr))
    }

    /// Whether every pixel of a full-resolution render at `intr` would be at
    /// least `threshold` away. Equivalent to `min_depth(pose, intr) >=
    /// threshold`, but only the rays that could land on a primitive within
    /// `threshold` of the camera are traced.
    pub fn is_clear(&self, pose: &CameraPose, intr: &Intrinsics, threshold: f64) -> bool {
        let p = pose.position;
        let r = Vector3::repeat(threshold);
        let (w, h) = (intr.width as usize, intr.height as usize);
        for i in self.bvh.query_box(&(p - r), &(p + r)) {
            let prim = &self.prims[i];
            if prim.shape.distance_to(&p) >= threshold {
                continue;
            }
            let (blo, bhi) = self.boxes[i];
            let lo = blo.sup(&(p - r));
            let hi = bhi.inf(&(p + r));
            let Some((u0, u1, v0, v1)) = projected_bounds(intr, pose, &lo, &hi) else {
                continue;
            };
            let span = |a: f64, b: f64, n: usize| {
                let first = (a - 0.5).ceil().clamp(0.0, n as f64) as usize;
                let last = (b - 0.5).floor().clamp(-1.0, n as f64 - 1.0);
                (first, last)
            };
            let (i0, i1) = span(u0, u1, w);
            let (j0, j1) = span(v0, v1, h);
            if i1 < 0.0 || j1 < 0.0 {
                continue;
            }
            for j in j0..=j1 as usize {
                for ii in i0..=i1 as usize {
                    let ray = pixel_center_ray(intr, pose, ii, j);
                    if let Some((t, _)) = prim.shape.intersect(&ray.origin, &ray.dir) {
                        if t < threshold {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

/// Probe intrinsics for a view: [`PROBE_SIZE`] wide, same fov and aspect.
pub fn probe_intrinsics(intr: &Intrinsics) -> Intrinsics {
    let h = (PROBE_SIZE as f64 * intr.height as f64 / intr.width as f64).round().max(1.0) as u32;
    intr.with_size(PROBE_SIZE, h)
}

/// Image-space bounds of the part of an axis-aligned box in front of the
/// camera, or `None` if none of it is.
fn projected_bounds(intr: &Intrinsics, pose: &CameraPose, lo: &Vector3<f64>, hi: &Vector3<f64>) -> Option<(f64, f64, f64, f64)> {
    const NEAR: f64 = 1e-9;
    let corners: Vec<Vector3<f64>> = (0..8)
        .map(|k| {
            let c = Vector3::new(
                if k & 1 == 0 { lo.x } else { hi.x },
                if k & 2 == 0 { lo.y } else { hi.y },
                if k & 4 == 0 { lo.z } else { hi.z },
            );
            pose.to_camera(&c)
        })
        .collect();
    let mut pts: Vec<Vector3<f64>> = corners.iter().filter(|c| c.x >= NEAR).copied().collect();
    for a in 0..8 {
        for bit in [1, 2, 4] {
            let b = a | bit;
            if b == a {
                continue;
            }
            let (ca, cb) = (corners[a], corners[b]);
            if (ca.x - NEAR) * (cb.x - NEAR) < 0.0 {
                let s = (NEAR - ca.x) / (cb.x - ca.x);
                pts.push(ca + (cb - ca) * s);
            }
        }
    }
    if pts.is_empty() {
        return None;
    }
    let f = intr.focal();
    let (cx, cy) = intr.center();
    let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for q in pts {
        let x = q.x.max(NEAR);
        let u = cx - f * q.y / x;
        let v = cy - f * q.z / x;
        b = (b.0.min(u), b.1.max(u), b.2.min(v), b.3.max(v));
    }
    Some(b)
}

pub fn render_view(layout: &SceneLayout, target: &RenderTarget) -> Result<RenderOutput> {
    Scene::new(layout).render(target)
}

/// Render all six faces of a rig at `face_size`.
pub fn render_cubemap(layout: &SceneLayout, rig: &CubemapRig, face_size: u32, channels: &[Channel]) -> Result<CubemapRender> {
    Scene::new(layout).render_cubemap(rig, face_size, channels)
}

impl Scene {
    pub fn render_cubemap(&self, rig: &CubemapRig, face_size: u32, channels: &[Channel]) -> Result<CubemapRender> {
        let intr = rig.intrinsics(face_size);
        let faces = rig
            .face_poses()
            .iter()
            .map(|pose| self.render(&RenderTarget::new(intr, *pose, channels)))
            .collect::<Result<Vec<_>>>()?;
        let fov = rig.face_fov_deg;
        fn gather<T: Copy>(faces: &[RenderOutput], fov: f64, get: impl Fn(&RenderOutput) -> Option<Image<T>>) -> Result<Option<Cubemap<T>>> {
            faces
                .iter()
                .map(&get)
                .collect::<Option<Vec<_>>>()
                .map(|f| Cubemap::new(f, fov))
                .transpose()
        }
        Ok(CubemapRender {
            depth: gather(&faces, fov, |f| f.depth.clone())?,
            semantic: gather(&faces, fov, |f| f.semantic.clone())?,
            instance: gather(&faces, fov, |f| f.instance.clone())?,
            normal: gather(&faces, fov, |f| f.normal.clone())?,
        })
    }
}

pub fn min_depth_probe(layout: &SceneLayout, pose: &CameraPose, intr: &Intrinsics) -> f64 {
    Scene::new(layout).min_depth_probe(pose, intr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::look_at;
    use crate::scene::{Pose9D, ProxyObject, Room};

    fn empty_room() -> SceneLayout {
        SceneLayout::new("empty", vec![Room::rectangle([-2.0, -2.0], [2.0, 2.0], 0.0, 2.8, 0.15)])
    }

    #[test]
    fn wall_head_on() {
        let layout = SceneLayout::new("r", vec![Room::rectangle([-3.0, -2.0], [3.0, 2.0], 0.0, 2.8, 0.15)]);
        let pose = CameraPose::from_yaw_pitch(Vector3::new(0.0, 0.0, 1.4), 0.0, 0.0);
        let out = render_view(&layout, &RenderTarget::new(Intrinsics::square(65, 60.0), pose, &[Channel::Depth, Channel::Semantic])).unwrap();
        assert!((out.depth.unwrap().get(32, 32) - 3.0).abs() < 1e-12);
        assert_eq!(out.semantic.unwrap().get(32, 32), SemanticId::WALL);
    }

    #[test]
    fn cube_front_face() {
        let mut layout = empty_room();
        layout.rooms[0] = Room::rectangle([-4.0, -4.0], [4.0, 4.0], -2.0, 2.8, 0.15);
        layout.objects.push(ProxyObject::new(
            7,
            SemanticId::CABINET,
            Pose9D::from_yaw(Vector3::new(2.0, 0.0, 0.0), 0.0, Vector3::repeat(1.0)),
        ));
        let target = RenderTarget::new(Intrinsics::square(9, 40.0), CameraPose::identity(), &Channel::ALL);
        let out = render_view(&layout, &target).unwrap();
        assert!((out.depth.unwrap().get(4, 4) - 1.5).abs() < 1e-12);
        assert_eq!(out.semantic.unwrap().get(4, 4), SemanticId::CABINET);
        assert_eq!(out.instance.unwrap().get(4, 4), 7);
        assert_eq!(out.normal.unwrap().get(4, 4), [-1.0, 0.0, 0.0]);
    }

    #[test]
    fn no_channels_is_an_error() {
        let t = RenderTarget::new(Intrinsics::square(4, 60.0), CameraPose::identity(), &[]);
        assert!(render_view(&empty_room(), &t).is_err());
    }

    #[test]
    fn outside_everything_is_void() {
        let pose = CameraPose::from_yaw_pitch(Vector3::new(10.0, 0.0, 1.0), 0.0, 0.0);
        let t = RenderTarget::new(Intrinsics::square(4, 60.0), pose, &[Channel::Depth, Channel::Semantic]);
        let out = render_view(&empty_room(), &t).unwrap();
        assert!(out.depth.unwrap().pixels().iter().all(|d| d.is_infinite()));
        assert!(out.semantic.unwrap().pixels().iter().all(|s| s.is_void()));
    }

    #[test]
    fn probe_values() {
        let layout = empty_room();
        let scene = Scene::new(&layout);
        let intr = Intrinsics::square(576, 72.0);
        let near_wall = CameraPose::from_yaw_pitch(Vector3::new(1.8, 0.0, 1.4), 0.0, 0.0);
        let d = scene.min_depth_probe(&near_wall, &intr);
        assert!(d >= 0.2 && d - 0.2 < 1e-4, "{d}");
        let center = CameraPose::from_yaw_pitch(Vector3::new(0.0, 0.0, 1.4), 0.0, 0.0);
        // Even probe width: the nearest pixel centers straddle the axis.
        let probe = probe_intrinsics(&intr);
        let ray = pixel_center_ray(&probe, &center, 32, 32);
        assert!((scene.min_depth_probe(&center, &intr) - 2.0 / ray.dir.x).abs() < 1e-12);
        assert!(scene.min_depth_probe(&center, &intr) - 2.0 < 1e-3);
    }

    #[test]
    fn inside_a_solid_probe_is_zero() {
        let pose = CameraPose::from_yaw_pitch(Vector3::new(2.05, 0.0, 1.4), 0.0, 0.0);
        assert_eq!(min_depth_probe(&empty_room(), &pose, &Intrinsics::square(64, 72.0)), 0.0);
    }

    #[test]
    fn clearance_check_matches_full_render() {
        let mut layout = empty_room();
        layout.objects.push(ProxyObject::new(
            3,
            SemanticId::CHAIR,
            Pose9D::from_yaw(Vector3::new(0.5, 0.6, 0.45), 0.4, Vector3::new(0.5, 0.5, 0.9)),
        ));
        let scene = Scene::new(&layout);
        let intr = Intrinsics::square(96, 72.0);
        let target = Vector3::new(0.0, 0.0, 1.0);
        for k in 0..40 {
            let a = k as f64 * 0.157;
            let p = Vector3::new(1.6 * a.cos(), 1.6 * a.sin(), 0.3 + 0.05 * k as f64);
            let pose = look_at(p, target, Vector3::z()).unwrap();
            let full = scene.min_depth(&pose, &intr);
            for thr in [0.2, 0.3, 0.45] {
                assert_eq!(scene.is_clear(&pose, &intr, thr), full >= thr, "pose {k} thr {thr}");
            }
        }
    }

    #[test]
    fn closed_room_is_finite() {
        let scene = Scene::new(&empty_room());
        let rig = CubemapRig::new(Vector3::new(0.3, -0.2, 1.1), 95.0);
        let cube = scene.render_cubemap(&rig, 16, &[Channel::Depth]).unwrap();
        let diag = (16.0f64 + 16.0 + 2.8 * 2.8).sqrt();
        for f in &cube.depth.unwrap().faces {
            assert!(f.pixels().iter().all(|d| d.is_finite() && *d <= diag));
        }
    }

    #[test]
    fn deterministic() {
        let layout = crate::scene::generate_layout(3, &Default::default()).unwrap();
        let scene = Scene::new(&layout);
        let t = RenderTarget::new(Intrinsics::square(32, 72.0), CameraPose::from_yaw_pitch(Vector3::new(0.1, 0.1, 1.5), 0.3, 0.0), &Channel::ALL);
        assert_eq!(scene.render(&t).unwrap(), scene.render(&t).unwrap());
    }
}
