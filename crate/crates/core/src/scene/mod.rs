//! Scene layouts: rooms, labeled oriented boxes, and connectors between rooms.
//!
//! World frame is right-handed, +Z up, meters. Layouts are plain data; every
//! constructor path goes through [`validate`] before a layout is handed out.

mod expand;
mod generate;
mod io;
pub mod obb;
pub mod polygon;
mod semantic;
mod validate;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub use expand::{expand_layout, remove_labeled_points};
pub use generate::{generate_layout, GenSpec};
pub use io::{load_layout, parse_layout, save_layout, to_json};
pub use obb::Obb;
pub use semantic::SemanticId;
pub use validate::validate;

use polygon::Point2;

/// Instance ids the renderer assigns to room structure. Entity ids must stay
/// at or below [`MAX_ENTITY_ID`] so they fit 16-bit instance maps.
pub const WALL_INSTANCE: u32 = 65533;
pub const FLOOR_INSTANCE: u32 = 65534;
pub const CEILING_INSTANCE: u32 = 65535;
pub const MAX_ENTITY_ID: u32 = 65532;

/// Position, orientation and full per-axis extents of a box.
///
/// Stored exactly as serialized (`quaternion` is `[w, x, y, z]`) so that
/// re-serializing an untouched entity reproduces the same bytes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose9D {
    pub position: [f64; 3],
    pub quaternion: [f64; 4],
    pub scale: [f64; 3],
}

impl Pose9D {
    pub fn new(position: Vector3<f64>, rotation: UnitQuaternion<f64>, scale: Vector3<f64>) -> Self {
        let q = rotation.quaternion();
        Pose9D {
            position: position.into(),
            quaternion: [q.w, q.i, q.j, q.k],
            scale: scale.into(),
        }
    }

    /// Axis-aligned box rotated by `yaw` radians about +Z.
    pub fn from_yaw(position: Vector3<f64>, yaw: f64, scale: Vector3<f64>) -> Self {
        Self::new(
            position,
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            scale,
        )
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    pub fn scale(&self) -> Vector3<f64> {
        Vector3::from(self.scale)
    }

    pub fn raw_quaternion(&self) -> Quaternion<f64> {
        let [w, x, y, z] = self.quaternion;
        Quaternion::new(w, x, y, z)
    }

    /// Rotation, renormalized (validation guarantees the stored value is
    /// already unit within 1e-6).
    pub fn rotation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_quaternion(self.raw_quaternion())
    }

    pub fn obb(&self) -> Obb {
        Obb::from_pose(self)
    }
}

/// One room: an extruded floor polygon. Walls sit outside the polygon, so the
/// polygon edges are the interior wall faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    pub floor_polygon: Vec<[f64; 2]>,
    pub floor_z: f64,
    pub ceiling_z: f64,
    pub wall_thickness: f64,
}

impl Room {
    /// Axis-aligned rectangular room, counter-clockwise.
    pub fn rectangle(min: [f64; 2], max: [f64; 2], floor_z: f64, ceiling_z: f64, wall_thickness: f64) -> Self {
        Room {
            floor_polygon: vec![
                [min[0], min[1]],
                [max[0], min[1]],
                [max[0], max[1]],
                [min[0], max[1]],
            ],
            floor_z,
            ceiling_z,
            wall_thickness,
        }
    }

    pub fn polygon(&self) -> Vec<Point2> {
        polygon::to_points(&self.floor_polygon)
    }

    /// Polygon vertices in counter-clockwise order regardless of file order.
    pub fn polygon_ccw(&self) -> Vec<Point2> {
        let mut poly = self.polygon();
        if polygon::signed_area(&poly) < 0.0 {
            poly.reverse();
        }
        poly
    }

    pub fn height(&self) -> f64 {
        self.ceiling_z - self.floor_z
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        polygon::contains(&self.polygon(), Point2::new(x, y))
    }

    /// Bounds of the room interior (floor polygon extruded to the ceiling).
    pub fn interior_bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let (lo, hi) = polygon::bounds(&self.polygon());
        (
            Vector3::new(lo.x, lo.y, self.floor_z),
            Vector3::new(hi.x, hi.y, self.ceiling_z),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxyObject {
    pub instance_id: u32,
    /// Kept as a raw integer so out-of-range labels surface as validation
    /// errors naming the object rather than as parse errors.
    pub semantic_label: u32,
    pub pose: Pose9D,
}

impl ProxyObject {
    pub fn new(instance_id: u32, label: SemanticId, pose: Pose9D) -> Self {
        ProxyObject {
            instance_id,
            semantic_label: label.id() as u32,
            pose,
        }
    }

    pub fn label(&self) -> SemanticId {
        SemanticId::try_from(self.semantic_label).unwrap_or(SemanticId::VOID)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectorKind {
    Door,
    TemporaryWall,
    /// A temporary wall removed by expansion: still cuts the wall openings of
    /// both rooms but has no geometry of its own.
    Opening,
}

impl ConnectorKind {
    /// Semantic label of the rendered box, `None` for openings.
    pub fn label(self) -> Option<SemanticId> {
        match self {
            ConnectorKind::Door => Some(SemanticId::DOOR),
            ConnectorKind::TemporaryWall => Some(SemanticId::WALL),
            ConnectorKind::Opening => None,
        }
    }
}

/// A door or temporary wall filling an opening in the wall of `room_a`
/// (and `room_b` once the adjacent room exists). Its `instance_id` doubles as
/// the connector id and shares the id space of objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Connector {
    pub instance_id: u32,
    pub kind: ConnectorKind,
    pub pose: Pose9D,
    pub room_a: usize,
    #[serde(default)]
    pub room_b: Option<usize>,
}

impl Connector {
    pub fn is_dangling(&self) -> bool {
        self.room_b.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneLayout {
    pub id: String,
    #[serde(default = "default_units")]
    pub units: String,
    #[serde(default = "default_up_axis")]
    pub up_axis: String,
    pub rooms: Vec<Room>,
    #[serde(default)]
    pub objects: Vec<ProxyObject>,
    #[serde(default)]
    pub connectors: Vec<Connector>,
}

fn default_units() -> String {
    "meters".to_owned()
}

fn default_up_axis() -> String {
    "+Z".to_owned()
}

impl SceneLayout {
    pub fn new(id: impl Into<String>, rooms: Vec<Room>) -> Self {
        SceneLayout {
            id: id.into(),
            units: default_units(),
            up_axis: default_up_axis(),
            rooms,
            objects: Vec::new(),
            connectors: Vec::new(),
        }
    }

    pub fn connector(&self, instance_id: u32) -> Option<&Connector> {
        self.connectors.iter().find(|c| c.instance_id == instance_id)
    }

    pub fn object(&self, instance_id: u32) -> Option<&ProxyObject> {
        self.objects.iter().find(|o| o.instance_id == instance_id)
    }

    /// Index of the room whose floor polygon contains the XY point.
    pub fn room_containing(&self, x: f64, y: f64) -> Option<usize> {
        self.rooms.iter().position(|r| r.contains_xy(x, y))
    }

    pub fn max_instance_id(&self) -> u32 {
        self.objects
            .iter()
            .map(|o| o.instance_id)
            .chain(self.connectors.iter().map(|c| c.instance_id))
            .max()
            .unwrap_or(0)
    }

    /// Bounds of everything in the layout, walls included.
    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for room in &self.rooms {
            let (a, b) = room.interior_bounds();
            let t = Vector3::repeat(room.wall_thickness);
            lo = lo.inf(&(a - t));
            hi = hi.sup(&(b + t));
        }
        let boxes = self
            .objects
            .iter()
            .map(|o| o.pose.obb())
            .chain(self.connectors.iter().map(|c| c.pose.obb()));
        for b in boxes {
            let (a, c) = b.aabb();
            lo = lo.inf(&a);
            hi = hi.sup(&c);
        }
        (lo, hi)
    }
}

/// Room index plus wall-piece geometry, used by the renderer and validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallPiece {
    pub room: usize,
    pub edge: usize,
    pub obb: Obb,
}

/// Wall boxes of every room. Each polygon edge gets a slab of the room's
/// wall thickness outside the polygon, extended past convex corners so the
/// shell is closed, and cut wherever a connector attached to that room
/// crosses it.
pub fn wall_pieces(layout: &SceneLayout) -> Vec<WallPiece> {
    let mut out = Vec::new();
    for (ri, room) in layout.rooms.iter().enumerate() {
        let cutters: Vec<Obb> = layout
            .connectors
            .iter()
            .filter(|c| c.room_a == ri || c.room_b == Some(ri))
            .map(|c| c.pose.obb())
            .collect();
        for (ei, frame) in edge_frames(room).into_iter().enumerate() {
            let mut rects = vec![frame.full_rect()];
            for cut in &cutters {
                if !frame.slab(frame.full_rect()).overlaps(cut, 1e-9) {
                    continue;
                }
                let hole = frame.project(cut);
                rects = rects.into_iter().flat_map(|r| subtract_rect(r, hole)).collect();
            }
            out.extend(rects.into_iter().map(|r| WallPiece {
                room: ri,
                edge: ei,
                obb: frame.slab(r),
            }));
        }
    }
    out
}

/// Uncut wall slab for each edge of a room, in polygon order.
pub fn full_walls(room: &Room) -> Vec<Obb> {
    edge_frames(room)
        .into_iter()
        .map(|f| f.slab(f.full_rect()))
        .collect()
}

/// Along-edge `s` and height `z` extents of a wall piece.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Rect {
    s0: f64,
    s1: f64,
    z0: f64,
    z1: f64,
}

impl Rect {
    fn is_empty(&self) -> bool {
        self.s1 - self.s0 <= 1e-9 || self.z1 - self.z0 <= 1e-9
    }
}

fn subtract_rect(r: Rect, hole: Rect) -> Vec<Rect> {
    let overlap = hole.s0 < r.s1 && hole.s1 > r.s0 && hole.z0 < r.z1 && hole.z1 > r.z0;
    if !overlap {
        return vec![r];
    }
    let hs0 = hole.s0.max(r.s0);
    let hs1 = hole.s1.min(r.s1);
    let hz0 = hole.z0.max(r.z0);
    let hz1 = hole.z1.min(r.z1);
    [
        Rect { s1: hs0, ..r },
        Rect { s0: hs1, ..r },
        Rect { s0: hs0, s1: hs1, z1: hz0, ..r },
        Rect { s0: hs0, s1: hs1, z0: hz1, ..r },
    ]
    .into_iter()
    .filter(|p| !p.is_empty())
    .collect()
}

/// Local frame of one wall: origin at the edge start on the floor, `dir`
/// along the edge, `out` pointing away from the room interior.
struct EdgeFrame {
    origin: Point2,
    dir: Point2,
    out: Point2,
    start_ext: f64,
    end: f64,
    floor_z: f64,
    ceiling_z: f64,
    thickness: f64,
}

impl EdgeFrame {
    fn full_rect(&self) -> Rect {
        Rect {
            s0: -self.start_ext,
            s1: self.end,
            z0: self.floor_z - self.thickness,
            z1: self.ceiling_z + self.thickness,
        }
    }

    fn slab(&self, r: Rect) -> Obb {
        let mid_s = 0.5 * (r.s0 + r.s1);
        let c2 = self.origin + self.dir * mid_s + self.out * (0.5 * self.thickness);
        let axes = nalgebra::Matrix3::from_columns(&[
            Vector3::new(self.dir.x, self.dir.y, 0.0),
            Vector3::new(self.out.x, self.out.y, 0.0),
            Vector3::z(),
        ]);
        Obb::new(
            Vector3::new(c2.x, c2.y, 0.5 * (r.z0 + r.z1)),
            axes,
            Vector3::new(0.5 * (r.s1 - r.s0), 0.5 * self.thickness, 0.5 * (r.z1 - r.z0)),
        )
    }

    /// Extent of a box projected onto the wall's (s, z) plane.
    fn project(&self, b: &Obb) -> Rect {
        let mut r = Rect {
            s0: f64::INFINITY,
            s1: f64::NEG_INFINITY,
            z0: f64::INFINITY,
            z1: f64::NEG_INFINITY,
        };
        for c in b.corners() {
            let s = (Point2::new(c.x, c.y) - self.origin).dot(&self.dir);
            r.s0 = r.s0.min(s);
            r.s1 = r.s1.max(s);
            r.z0 = r.z0.min(c.z);
            r.z1 = r.z1.max(c.z);
        }
        r
    }
}

fn edge_frames(room: &Room) -> Vec<EdgeFrame> {
    let poly = room.polygon_ccw();
    let n = poly.len();
    let t = room.wall_thickness;
    // A vertex is convex for a CCW polygon when the turn is to the left.
    let convex = |i: usize| {
        let prev = poly[(i + n - 1) % n];
        let cur = poly[i];
        let next = poly[(i + 1) % n];
        (cur - prev).perp(&(next - cur)) > 0.0
    };
    (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            let len = (b - a).norm();
            let dir = (b - a) / len;
            EdgeFrame {
                origin: a,
                dir,
                out: Point2::new(dir.y, -dir.x),
                start_ext: if convex(i) { t } else { 0.0 },
                end: len + if convex((i + 1) % n) { t } else { 0.0 },
                floor_z: room.floor_z,
                ceiling_z: room.ceiling_z,
                thickness: t,
            }
        })
        .collect()
}
