use std::collections::HashSet;

use super::polygon::{self, Point2};
use super::{full_walls, Pose9D, SceneLayout, SemanticId, MAX_ENTITY_ID};
use crate::error::{Entity, Error, Result};

/// Tolerance for room interiors touching each other.
const ROOM_OVERLAP_TOL: f64 = 1e-3;
const QUAT_NORM_TOL: f64 = 1e-6;

/// Check every layout invariant, reporting the first violation.
pub fn validate(layout: &SceneLayout) -> Result<()> {
    let whole = || Entity::layout(&layout.id);
    if layout.units != "meters" {
        return Err(Error::validation(format!("units must be meters, got '{}'", layout.units), whole()));
    }
    if layout.up_axis != "+Z" {
        return Err(Error::validation(format!("up_axis must be +Z, got '{}'", layout.up_axis), whole()));
    }
    if layout.rooms.is_empty() {
        return Err(Error::validation("layout has no rooms", whole()));
    }

    let polys: Vec<Vec<Point2>> = layout.rooms.iter().map(|r| r.polygon()).collect();
    for (i, room) in layout.rooms.iter().enumerate() {
        let e = || Entity::room(i);
        if room.floor_polygon.len() < 3 {
            return Err(Error::validation("floor polygon needs at least 3 vertices", e()));
        }
        let finite = room.floor_polygon.iter().flatten().all(|v| v.is_finite())
            && room.floor_z.is_finite()
            && room.ceiling_z.is_finite()
            && room.wall_thickness.is_finite();
        if !finite {
            return Err(Error::validation("non-finite room dimension", e()));
        }
        if room.ceiling_z <= room.floor_z {
            return Err(Error::validation("ceiling_z must exceed floor_z", e()));
        }
        if room.wall_thickness <= 0.0 {
            return Err(Error::validation("wall_thickness must be positive", e()));
        }
        if !polygon::is_simple(&polys[i]) {
            return Err(Error::validation("floor polygon is not simple", e()));
        }
    }
    for i in 0..polys.len() {
        for j in (i + 1)..polys.len() {
            if polygon::interiors_overlap(&polys[i], &polys[j], ROOM_OVERLAP_TOL) {
                return Err(Error::validation(
                    format!("floor polygon overlaps room {i}"),
                    Entity::room(j),
                ));
            }
        }
    }

    let mut ids = HashSet::new();
    for obj in &layout.objects {
        let e = || Entity::object(obj.instance_id);
        if obj.instance_id == 0 {
            return Err(Error::validation("instance_id 0 is reserved for void", e()));
        }
        if obj.instance_id > MAX_ENTITY_ID {
            return Err(Error::validation(format!("instance_id above {MAX_ENTITY_ID} is reserved"), e()));
        }
        if !ids.insert(obj.instance_id) {
            return Err(Error::validation("duplicate instance_id", e()));
        }
        if obj.semantic_label == 0 || SemanticId::try_from(obj.semantic_label).is_err() {
            return Err(Error::validation("semantic_label out of range", e()));
        }
        check_pose(&obj.pose).map_err(|m| Error::validation(m, e()))?;
        let [x, y, _] = obj.pose.position;
        let containing = layout.rooms.iter().filter(|r| r.contains_xy(x, y)).count();
        if containing != 1 {
            return Err(Error::validation(
                format!("box center lies in {containing} room floor polygons, expected 1"),
                e(),
            ));
        }
    }

    for c in &layout.connectors {
        let e = || Entity::connector(c.instance_id);
        if c.instance_id == 0 {
            return Err(Error::validation("instance_id 0 is reserved for void", e()));
        }
        if c.instance_id > MAX_ENTITY_ID {
            return Err(Error::validation(format!("instance_id above {MAX_ENTITY_ID} is reserved"), e()));
        }
        if !ids.insert(c.instance_id) {
            return Err(Error::validation("duplicate instance_id", e()));
        }
        check_pose(&c.pose).map_err(|m| Error::validation(m, e()))?;
        let rooms = std::iter::once(c.room_a).chain(c.room_b);
        for r in rooms {
            let Some(room) = layout.rooms.get(r) else {
                return Err(Error::validation(format!("room index {r} does not exist"), e()));
            };
            let obb = c.pose.obb();
            if !full_walls(room).iter().any(|w| w.overlaps(&obb, 1e-9)) {
                return Err(Error::validation(
                    format!("connector does not intersect a wall of room {r}"),
                    e(),
                ));
            }
        }
        if c.room_b == Some(c.room_a) {
            return Err(Error::validation("room_a and room_b are the same room", e()));
        }
    }
    Ok(())
}

fn check_pose(pose: &Pose9D) -> std::result::Result<(), String> {
    let all = pose
        .position
        .iter()
        .chain(&pose.quaternion)
        .chain(&pose.scale);
    if !all.into_iter().all(|v| v.is_finite()) {
        return Err("non-finite pose component".into());
    }
    let norm = pose.quaternion.iter().map(|q| q * q).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > QUAT_NORM_TOL {
        return Err(format!("quaternion norm {norm} is not 1"));
    }
    if pose.scale.iter().any(|&s| s <= 0.0) {
        return Err("scale components must be positive".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use nalgebra::Vector3;

    use super::*;
    use crate::scene::{Connector, ConnectorKind, ProxyObject, Room};

    fn base() -> SceneLayout {
        let mut l = SceneLayout::new("v", vec![Room::rectangle([-2.0, -2.0], [2.0, 2.0], 0.0, 2.8, 0.1)]);
        l.objects.push(ProxyObject::new(
            1,
            SemanticId::TABLE,
            Pose9D::from_yaw(Vector3::new(0.0, 0.0, 0.4), 0.0, Vector3::new(1.0, 1.0, 0.8)),
        ));
        l
    }

    fn message(layout: &SceneLayout) -> String {
        match validate(layout) {
            Err(Error::Validation { message, entity }) => format!("{message} @ {entity}"),
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn accepts_valid_layout() {
        validate(&base()).unwrap();
    }

    #[test]
    fn label_out_of_range_names_the_object() {
        let mut l = base();
        l.objects[0].semantic_label = 55;
        assert_eq!(message(&l), "semantic_label out of range @ object 1");
    }

    #[test]
    fn rejects_each_broken_invariant() {
        let mut l = base();
        l.objects[0].pose.quaternion = [0.9, 0.0, 0.0, 0.0];
        assert!(message(&l).contains("quaternion norm"));

        let mut l = base();
        l.objects[0].pose.scale[2] = 0.0;
        assert!(message(&l).contains("scale"));

        let mut l = base();
        l.objects[0].pose.position = [5.0, 0.0, 0.4];
        assert!(message(&l).contains("0 room floor polygons"));

        let mut l = base();
        l.objects.push(l.objects[0].clone());
        assert!(message(&l).contains("duplicate"));

        let mut l = base();
        l.rooms[0].ceiling_z = -1.0;
        assert!(message(&l).contains("ceiling_z"));

        let mut l = base();
        l.rooms.push(Room::rectangle([1.0, 1.0], [3.0, 3.0], 0.0, 2.8, 0.1));
        assert!(message(&l).contains("overlaps"));

        let mut l = base();
        l.connectors.push(Connector {
            instance_id: 2,
            kind: ConnectorKind::Door,
            pose: Pose9D::from_yaw(Vector3::new(0.0, 0.0, 1.0), 0.0, Vector3::new(0.1, 1.0, 2.0)),
            room_a: 0,
            room_b: None,
        });
        assert!(message(&l).contains("does not intersect a wall"));
    }
}
