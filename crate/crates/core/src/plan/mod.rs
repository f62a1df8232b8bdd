//! Camera trajectories over a proxy layout: quadrant partitioning, circular
//! sparse poses with clearance culling, interpolation to fixed-length paths,
//! and the panorama view rigs.

mod trajectory;

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{interpolate_poses, look_at, CameraPose, Intrinsics};
use crate::render::{Channel, RenderTarget, Scene};
use crate::scene::polygon::{self, Point2};
use crate::scene::SceneLayout;
pub use trajectory::{load_trajectory, save_trajectory, trajectory_from_json, trajectory_to_json, Trajectory};

/// Points sampled along a circle when checking its wall clearance.
const CIRCLE_SAMPLES: usize = 72;
/// Smallest circle radius tried before giving up on a quadrant, meters.
const MIN_RADIUS: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub n_quadrants: usize,
    pub sparse_count: usize,
    pub min_clearance_m: f64,
    pub frames_per_traj: usize,
    pub camera_height_m: f64,
    pub radius_fraction: f64,
    pub fov_deg: f64,
    pub image_size: u32,
    /// Re-plans with a 10% smaller circle after an interpolated pose fails.
    pub max_retries: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            n_quadrants: 4,
            sparse_count: 12,
            min_clearance_m: 0.3,
            frames_per_traj: 42,
            camera_height_m: 1.5,
            radius_fraction: 0.4,
            fov_deg: 72.0,
            image_size: 576,
            max_retries: 5,
        }
    }
}

impl PlannerConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("planner: {m}")));
        if self.n_quadrants != 4 {
            return bad("n_quadrants must be 4");
        }
        if self.sparse_count < 2 || self.frames_per_traj < 2 {
            return bad("sparse_count and frames_per_traj must be at least 2");
        }
        let positive = [self.min_clearance_m, self.camera_height_m, self.radius_fraction];
        if !positive.iter().all(|v| v.is_finite() && *v > 0.0) {
            return bad("clearance, camera height and radius fraction must be positive");
        }
        if self.image_size == 0 {
            return bad("image_size must be positive");
        }
        self.intrinsics().check()
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::square(self.image_size, self.fov_deg)
    }
}

/// One cell of a room's bounding box split at the floor-polygon centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrant {
    pub id: usize,
    pub room: usize,
    pub min: [f64; 2],
    pub max: [f64; 2],
    /// Cell center, moved inside the floor polygon when it falls outside.
    pub center: [f64; 2],
}

impl Quadrant {
    pub fn half_extents(&self) -> [f64; 2] {
        [0.5 * (self.max[0] - self.min[0]), 0.5 * (self.max[1] - self.min[1])]
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }

    fn center_point(&self) -> Point2 {
        Point2::new(self.center[0], self.center[1])
    }
}

/// Split a room's floor bounding box into four cells at the polygon's area
/// centroid, ordered (−x,−y), (+x,−y), (−x,+y), (+x,+y).
pub fn partition_quadrants(layout: &SceneLayout, room_id: usize) -> Result<[Quadrant; 4]> {
    let room = layout
        .rooms
        .get(room_id)
        .ok_or_else(|| Error::DegenerateRoom { room: room_id, reason: "no such room".into() })?;
    let poly = room.polygon();
    let (lo, hi) = polygon::bounds(&poly);
    let c = polygon::centroid(&poly);
    const MIN_EXTENT: f64 = 1e-3;
    let degenerate = |reason: String| Error::DegenerateRoom { room: room_id, reason };
    if hi.x - lo.x < MIN_EXTENT || hi.y - lo.y < MIN_EXTENT {
        return Err(degenerate("bounding box has near-zero extent".into()));
    }
    if c.x - lo.x < MIN_EXTENT || hi.x - c.x < MIN_EXTENT || c.y - lo.y < MIN_EXTENT || hi.y - c.y < MIN_EXTENT {
        return Err(degenerate("centroid on the bounding box edge".into()));
    }
    let xs = [(lo.x, c.x), (c.x, hi.x)];
    let ys = [(lo.y, c.y), (c.y, hi.y)];
    let mut out = [Quadrant { id: 0, room: room_id, min: [0.0; 2], max: [0.0; 2], center: [0.0; 2] }; 4];
    for (id, q) in out.iter_mut().enumerate() {
        let (x0, x1) = xs[id % 2];
        let (y0, y1) = ys[id / 2];
        let mid = Point2::new(0.5 * (x0 + x1), 0.5 * (y0 + y1));
        let inset = 0.25 * (0.5 * (x1 - x0)).min(0.5 * (y1 - y0));
        let center = interior_point(&poly, mid, inset);
        *q = Quadrant { id, room: room_id, min: [x0, y0], max: [x1, y1], center: [center.x, center.y] };
    }
    Ok(out)
}

/// `p` itself when inside the polygon, else its nearest boundary point moved
/// `inset` toward the interior.
fn interior_point(poly: &[Point2], p: Point2, inset: f64) -> Point2 {
    if polygon::contains(poly, p) {
        return p;
    }
    let b = polygon::nearest_boundary_point(poly, p);
    let outward = b - p;
    let n = outward.norm();
    let dir = if n > 0.0 { outward / n } else { Point2::zeros() };
    let mut q = b + dir * inset;
    // A nearest point on a reflex corner can push out through the other
    // edge; back off until the point is strictly inside.
    let mut step = inset;
    while !polygon::contains(poly, q) && step > 1e-9 {
        step *= 0.5;
        q = b + dir * step;
    }
    q
}

fn camera_z(layout: &SceneLayout, q: &Quadrant, cfg: &PlannerConfig) -> f64 {
    let room = &layout.rooms[q.room];
    let top = room.ceiling_z - cfg.min_clearance_m;
    let z = room.floor_z + cfg.camera_height_m;
    if z <= top {
        z
    } else {
        // Low ceiling: stay midway between floor and ceiling clearance bands.
        0.5 * (room.floor_z + room.ceiling_z)
    }
}

/// Panorama and guidance viewpoint of a room: the floor centroid (pulled
/// inside for concave rooms) at camera height.
pub fn room_viewpoint(layout: &SceneLayout, room_id: usize, cfg: &PlannerConfig) -> Result<Vector3<f64>> {
    let q = partition_quadrants(layout, room_id)?;
    let poly = layout.rooms[room_id].polygon();
    let (lo, hi) = polygon::bounds(&poly);
    let inset = 0.125 * (hi.x - lo.x).min(hi.y - lo.y);
    let c = interior_point(&poly, polygon::centroid(&poly), inset);
    Ok(Vector3::new(c.x, c.y, camera_z(layout, &q[0], cfg)))
}

/// Largest radius not above `cap` whose circle stays inside the quadrant cell
/// and keeps `min_clearance_m` from the room's walls, shrinking by 10% steps.
fn fit_radius(layout: &SceneLayout, q: &Quadrant, cfg: &PlannerConfig, cap: f64) -> f64 {
    let poly = layout.rooms[q.room].polygon();
    let c = q.center_point();
    let to_cell = (c.x - q.min[0]).min(q.max[0] - c.x).min(c.y - q.min[1]).min(q.max[1] - c.y);
    let mut r = cap.min(to_cell);
    let fits = |r: f64| {
        (0..CIRCLE_SAMPLES).all(|k| {
            let a = TAU * k as f64 / CIRCLE_SAMPLES as f64;
            let p = c + Point2::new(a.cos(), a.sin()) * r;
            polygon::contains(&poly, p) && polygon::distance_to_boundary(&poly, p) >= cfg.min_clearance_m
        })
    };
    while r > MIN_RADIUS && !fits(r) {
        r *= 0.9;
    }
    r.max(MIN_RADIUS)
}

fn initial_radius(q: &Quadrant, cfg: &PlannerConfig) -> f64 {
    let [hx, hy] = q.half_extents();
    cfg.radius_fraction * hx.min(hy)
}

fn circle_poses(q: &Quadrant, cfg: &PlannerConfig, radius: f64, z: f64) -> Result<Vec<CameraPose>> {
    let c = q.center_point();
    let target = Vector3::new(c.x, c.y, z);
    (0..cfg.sparse_count)
        .map(|k| {
            let a = TAU * k as f64 / cfg.sparse_count as f64;
            let p = Vector3::new(c.x + radius * a.cos(), c.y + radius * a.sin(), z);
            look_at(p, target, Vector3::z())
        })
        .collect()
}

/// Sparse circle of `sparse_count` poses around the quadrant center, each
/// looking at it, flagged `false` where the clearance probe sees anything
/// nearer than `min_clearance_m`.
pub fn plan_sparse_circle(layout: &SceneLayout, quadrant: &Quadrant, cfg: &PlannerConfig) -> Result<Vec<(CameraPose, bool)>> {
    cfg.check()?;
    let scene = Scene::new(layout);
    let r = fit_radius(layout, quadrant, cfg, initial_radius(quadrant, cfg));
    sparse_circle(&scene, layout, quadrant, cfg, r)
}

fn sparse_circle(scene: &Scene, layout: &SceneLayout, q: &Quadrant, cfg: &PlannerConfig, radius: f64) -> Result<Vec<(CameraPose, bool)>> {
    let intr = cfg.intrinsics();
    let poses = circle_poses(q, cfg, radius, camera_z(layout, q, cfg))?;
    let out: Vec<(CameraPose, bool)> = poses
        .into_iter()
        .map(|p| {
            let keep = scene.min_depth_probe(&p, &intr) >= cfg.min_clearance_m;
            (p, keep)
        })
        .collect();
    if !out.iter().any(|(_, k)| *k) {
        return Err(Error::NoValidPoses(format!(
            "quadrant {}: all {} sparse poses closer than {} m to geometry",
            q.id, cfg.sparse_count, cfg.min_clearance_m
        )));
    }
    Ok(out)
}

/// Kept poses in circular order as an open path that starts right after the
/// widest run of culled poses.
fn ordered_keys(sparse: &[(CameraPose, bool)]) -> Vec<CameraPose> {
    let n = sparse.len();
    let kept: Vec<usize> = (0..n).filter(|&i| sparse[i].1).collect();
    if kept.len() == n {
        return sparse.iter().map(|(p, _)| *p).collect();
    }
    let mut start = 0;
    let mut widest = 0;
    for (j, &i) in kept.iter().enumerate() {
        let prev = kept[(j + kept.len() - 1) % kept.len()];
        let gap = (i + n - prev) % n;
        let gap = if gap == 0 { n } else { gap };
        if gap > widest {
            widest = gap;
            start = j;
        }
    }
    (0..kept.len()).map(|j| sparse[kept[(start + j) % kept.len()]].0).collect()
}

/// Plan one quadrant's trajectory: sparse circle, cull, interpolate to
/// `frames_per_traj` poses, and verify every pose at full resolution. A
/// failure re-plans the circle with a 10% smaller radius.
pub fn plan_trajectory(layout: &SceneLayout, quadrant: &Quadrant, cfg: &PlannerConfig) -> Result<Trajectory> {
    cfg.check()?;
    plan_with_scene(&Scene::new(layout), layout, quadrant, cfg)
}

pub(crate) fn plan_with_scene(scene: &Scene, layout: &SceneLayout, q: &Quadrant, cfg: &PlannerConfig) -> Result<Trajectory> {
    let intr = cfg.intrinsics();
    let mut cap = initial_radius(q, cfg);
    let mut last_err = None;
    for _ in 0..=cfg.max_retries {
        let r = fit_radius(layout, q, cfg, cap);
        cap = r * 0.9;
        let sparse = match sparse_circle(scene, layout, q, cfg, r) {
            Ok(s) => s,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let keys = ordered_keys(&sparse);
        if keys.len() < 2 || cfg.frames_per_traj < keys.len() {
            last_err = Some(Error::NoValidPoses(format!(
                "quadrant {}: {} sparse poses kept, cannot build {} frames",
                q.id,
                keys.len(),
                cfg.frames_per_traj
            )));
            continue;
        }
        let poses = interpolate_poses(&keys, cfg.frames_per_traj)?;
        if let Some(bad) = poses.iter().position(|p| !scene.is_clear(p, &intr, cfg.min_clearance_m)) {
            last_err = Some(Error::NoValidPoses(format!(
                "quadrant {}: frame {bad} closer than {} m to geometry at radius {r:.3}",
                q.id, cfg.min_clearance_m
            )));
            continue;
        }
        return Ok(Trajectory {
            frame_count: poses.len(),
            poses,
            intrinsics: intr,
            kept_mask: sparse.iter().map(|(_, k)| *k).collect(),
            quadrant_id: q.id,
        });
    }
    Err(last_err.unwrap_or_else(|| Error::NoValidPoses(format!("quadrant {}", q.id))))
}

/// The four quadrant trajectories of a room.
pub fn plan_room(layout: &SceneLayout, room_id: usize, cfg: &PlannerConfig) -> Result<Vec<Trajectory>> {
    cfg.check()?;
    let scene = Scene::new(layout);
    partition_quadrants(layout, room_id)?
        .iter()
        .map(|q| plan_with_scene(&scene, layout, q, cfg))
        .collect()
}

const VIEW_CHANNELS: [Channel; 2] = [Channel::Depth, Channel::Semantic];

/// Eight level views from `center` at 45° yaw steps, view 0 along +X.
pub fn initial_panorama_views(center: Vector3<f64>, cfg: &PlannerConfig) -> Vec<RenderTarget> {
    (0..8)
        .map(|k| {
            let pose = CameraPose::from_yaw_pitch(center, (45.0 * k as f64).to_radians(), 0.0);
            RenderTarget::new(cfg.intrinsics(), pose, &VIEW_CHANNELS)
        })
        .collect()
}

/// Maximum |pitch| of panorama training views.
pub const PANORAMA_MAX_PITCH_DEG: f64 = 60.0;

/// Viewing directions of a Fibonacci lattice over the band |pitch| ≤ 60°,
/// uniform in sin(pitch); the first direction for `count = 1` is +X.
pub fn fibonacci_directions(count: usize) -> Vec<(f64, f64)> {
    let golden = PI * (3.0 - 5f64.sqrt());
    let zmax = PANORAMA_MAX_PITCH_DEG.to_radians().sin();
    (0..count)
        .map(|k| {
            let z = zmax * (1.0 - 2.0 * (k as f64 + 0.5) / count as f64);
            let yaw = (golden * k as f64).rem_euclid(TAU);
            (yaw, z.asin())
        })
        .collect()
}

pub fn sample_panorama_training_views(center: Vector3<f64>, count: usize, cfg: &PlannerConfig) -> Vec<RenderTarget> {
    fibonacci_directions(count)
        .into_iter()
        .map(|(yaw, pitch)| {
            RenderTarget::new(cfg.intrinsics(), CameraPose::from_yaw_pitch(center, yaw, pitch), &VIEW_CHANNELS)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Pose9D, ProxyObject, Room, SemanticId};

    fn square_room(half: f64) -> SceneLayout {
        SceneLayout::new("sq", vec![Room::rectangle([-half, -half], [half, half], 0.0, 2.8, 0.15)])
    }

    #[test]
    fn square_quadrants() {
        let q = partition_quadrants(&square_room(2.0), 0).unwrap();
        let centers: Vec<[f64; 2]> = q.iter().map(|q| q.center).collect();
        assert_eq!(centers, vec![[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0], [1.0, 1.0]]);
    }

    #[test]
    fn l_shape_center_is_pulled_inside() {
        let mut layout = square_room(2.0);
        layout.rooms[0].floor_polygon = vec![[0., 0.], [4., 0.], [4., 2.], [2., 2.], [2., 4.], [0., 4.]];
        let quads = partition_quadrants(&layout, 0).unwrap();
        let poly = layout.rooms[0].polygon();
        for q in &quads {
            let c = Point2::new(q.center[0], q.center[1]);
            assert!(polygon::contains(&poly, c), "{q:?}");
            assert!(q.contains(c.x, c.y));
        }
        // Centroid of the L is (5/3, 5/3); the (+x,+y) cell center (17/6, 17/6)
        // is outside. Brute-force its nearest boundary point by dense sampling.
        let q = quads[3];
        let mid = Point2::new(17.0 / 6.0, 17.0 / 6.0);
        let mut best = (f64::INFINITY, Point2::zeros());
        for (a, b) in polygon::edges(&poly) {
            for k in 0..=20000 {
                let p = a + (b - a) * (k as f64 / 20000.0);
                let d = (p - mid).norm();
                if d < best.0 - 1e-12 {
                    best = (d, p);
                }
            }
        }
        let c = Point2::new(q.center[0], q.center[1]);
        let inset = 0.25 * q.half_extents()[0].min(q.half_extents()[1]);
        assert!(((c - best.1).norm() - inset).abs() < 1e-3, "{c:?} vs {:?}", best.1);
        assert!(polygon::distance_to_boundary(&poly, c) > 0.99 * inset);
    }

    #[test]
    fn degenerate_room() {
        let mut layout = square_room(2.0);
        layout.rooms[0].floor_polygon = vec![[0., 0.], [4., 0.], [4., 1e-5], [0., 1e-5]];
        assert!(matches!(partition_quadrants(&layout, 0), Err(Error::DegenerateRoom { .. })));
    }

    #[test]
    fn empty_room_keeps_every_pose() {
        let layout = square_room(2.0);
        let cfg = PlannerConfig::default();
        for q in partition_quadrants(&layout, 0).unwrap() {
            let sparse = plan_sparse_circle(&layout, &q, &cfg).unwrap();
            assert_eq!(sparse.len(), 12);
            assert!(sparse.iter().all(|(_, k)| *k));
            for (p, _) in &sparse {
                assert!(q.contains(p.position.x, p.position.y));
                assert!((p.position.z - 1.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trajectory_in_empty_room() {
        let layout = square_room(2.0);
        let cfg = PlannerConfig::default();
        let trajs = plan_room(&layout, 0, &cfg).unwrap();
        assert_eq!(trajs.len(), 4);
        assert_eq!(trajs.iter().map(|t| t.poses.len()).sum::<usize>(), 168);
        let scene = Scene::new(&layout);
        for t in &trajs {
            assert_eq!(t.frame_count, 42);
            assert!(t.poses.iter().all(|p| scene.is_clear(p, &t.intrinsics, 0.3)));
        }
    }

    #[test]
    fn obstacle_culls_poses() {
        let mut layout = square_room(2.0);
        // Wardrobe inside the circle around (1, 1), touching it on the +x side.
        layout.objects.push(ProxyObject::new(
            5,
            SemanticId::CABINET,
            Pose9D::from_yaw(Vector3::new(1.3, 1.0, 1.0), 0.0, Vector3::new(0.2, 0.2, 2.0)),
        ));
        let cfg = PlannerConfig::default();
        let q = partition_quadrants(&layout, 0).unwrap()[3];
        let sparse = plan_sparse_circle(&layout, &q, &cfg).unwrap();
        let scene = Scene::new(&layout);
        let hi = Intrinsics::square(512, cfg.fov_deg);
        for (p, keep) in &sparse {
            assert_eq!(*keep, scene.min_depth(p, &hi) >= 0.3);
        }
        let kept = sparse.iter().filter(|(_, k)| *k).count();
        assert!(kept < 12 && kept >= 2, "{kept}");
        let t = plan_trajectory(&layout, &q, &cfg).unwrap();
        assert_eq!(t.poses.len(), 42);
        assert!(t.poses.iter().all(|p| scene.is_clear(p, &t.intrinsics, 0.3)));
    }

    #[test]
    fn gap_ordering() {
        let p = |i: f64| CameraPose::from_yaw_pitch(Vector3::new(i, 0.0, 0.0), 0.0, 0.0);
        let keep = [true, false, false, true, true, false];
        let sparse: Vec<_> = keep.iter().enumerate().map(|(i, &k)| (p(i as f64), k)).collect();
        let keys: Vec<f64> = ordered_keys(&sparse).iter().map(|c| c.position.x).collect();
        assert_eq!(keys, vec![3.0, 4.0, 0.0]);
    }

    #[test]
    fn initial_views() {
        let views = initial_panorama_views(Vector3::new(0.0, 0.0, 1.5), &PlannerConfig::default());
        assert_eq!(views.len(), 8);
        for (k, v) in views.iter().enumerate() {
            let f = v.pose.forward();
            let yaw = f.y.atan2(f.x).rem_euclid(TAU).to_degrees();
            assert!((yaw - 45.0 * k as f64).abs() < 1e-9);
            assert!(f.z.abs() < 1e-12);
            assert_eq!((v.intrinsics.width, v.intrinsics.height, v.intrinsics.fov_deg), (576, 576, 72.0));
        }
        assert!((views[0].pose.forward() - Vector3::x()).norm() < 1e-15);
    }

    #[test]
    fn panorama_views() {
        let cfg = PlannerConfig::default();
        let one = sample_panorama_training_views(Vector3::zeros(), 1, &cfg);
        assert!((one[0].pose.forward() - Vector3::x()).norm() < 1e-15);
        let dirs = fibonacci_directions(170);
        assert_eq!(dirs.len() + 4 * cfg.frames_per_traj, 338);
        assert!(dirs.iter().all(|(_, p)| p.abs() <= PANORAMA_MAX_PITCH_DEG.to_radians() + 1e-12));
    }
}
