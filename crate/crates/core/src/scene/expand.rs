use std::collections::HashSet;

use super::polygon;
use super::{full_walls, validate, ConnectorKind, SceneLayout};
use crate::error::{Error, Result};
use crate::fusion::PointCloud;

/// Room interiors may touch within this tolerance, meters.
const OVERLAP_TOL: f64 = 1e-3;
/// Margin around a connector box when dropping unlabeled points.
const REMOVAL_MARGIN: f64 = 0.01;

/// Attach `addition` to `base` through the dangling connector `connector_id`.
///
/// Both layouts share the absolute world frame; nothing from `base` is moved.
/// A temporary-wall connector turns into an opening (walls stay cut, no
/// geometry); a door stays. Instance ids of `addition` that collide with ids
/// already in use are renumbered past the current maximum.
pub fn expand_layout(base: &SceneLayout, addition: &SceneLayout, connector_id: u32) -> Result<SceneLayout> {
    let conn_index = base
        .connectors
        .iter()
        .position(|c| c.instance_id == connector_id)
        .ok_or(Error::UnknownId(connector_id))?;
    let conn = &base.connectors[conn_index];
    if !conn.is_dangling() {
        return Err(Error::Expansion(format!(
            "connector {connector_id} already joins rooms {} and {:?}",
            conn.room_a, conn.room_b
        )));
    }

    for (bi, b) in base.rooms.iter().enumerate() {
        for (ai, a) in addition.rooms.iter().enumerate() {
            if polygon::interiors_overlap(&b.polygon(), &a.polygon(), OVERLAP_TOL) {
                return Err(Error::Expansion(format!(
                    "addition room {ai} overlaps base room {bi}"
                )));
            }
        }
    }

    let conn_box = conn.pose.obb();
    let entry = addition
        .rooms
        .iter()
        .position(|r| full_walls(r).iter().any(|w| w.overlaps(&conn_box, 1e-9)))
        .ok_or_else(|| {
            Error::Expansion(format!("no addition room has a wall at connector {connector_id}"))
        })?;

    let offset = base.rooms.len();
    let mut merged = base.clone();
    merged.rooms.extend(addition.rooms.iter().cloned());
    {
        let c = &mut merged.connectors[conn_index];
        c.room_b = Some(offset + entry);
        if c.kind == ConnectorKind::TemporaryWall {
            c.kind = ConnectorKind::Opening;
        }
    }

    let mut used: HashSet<u32> = merged
        .objects
        .iter()
        .map(|o| o.instance_id)
        .chain(merged.connectors.iter().map(|c| c.instance_id))
        .collect();
    let mut next_id = used.iter().copied().max().unwrap_or(0) + 1;
    let mut fresh = |id: u32, used: &mut HashSet<u32>| {
        if used.insert(id) {
            id
        } else {
            while used.contains(&next_id) {
                next_id += 1;
            }
            used.insert(next_id);
            next_id
        }
    };
    for o in &addition.objects {
        let mut o = o.clone();
        o.instance_id = fresh(o.instance_id, &mut used);
        merged.objects.push(o);
    }
    for c in &addition.connectors {
        let mut c = c.clone();
        c.instance_id = fresh(c.instance_id, &mut used);
        c.room_a += offset;
        c.room_b = c.room_b.map(|r| r + offset);
        merged.connectors.push(c);
    }

    validate(&merged)?;
    Ok(merged)
}

/// Drop points belonging to a connector: every point whose instance label is
/// the connector id, plus unlabeled points (no instance channel, or id 0)
/// within 1 cm of its box. Remaining points keep their order.
pub fn remove_labeled_points(cloud: &PointCloud, layout: &SceneLayout, connector_id: u32) -> Result<PointCloud> {
    let conn = layout
        .connector(connector_id)
        .ok_or(Error::UnknownId(connector_id))?;
    let obb = conn.pose.obb();
    let keep: Vec<bool> = (0..cloud.len())
        .map(|i| {
            let label = cloud.instance.as_ref().map_or(0, |ids| ids[i]);
            if label == connector_id {
                return false;
            }
            !(label == 0 && obb.contains(&cloud.positions[i], REMOVAL_MARGIN))
        })
        .collect();
    Ok(cloud.filter(&keep))
}

#[cfg(test)]
mod tests {
    use nalgebra::Vector3;

    use super::*;
    use crate::scene::{wall_pieces, Connector, Pose9D, ProxyObject, Room, SemanticId};

    fn room_a() -> SceneLayout {
        let mut l = SceneLayout::new("a", vec![Room::rectangle([0.0, 0.0], [4.0, 4.0], 0.0, 2.8, 0.1)]);
        l.objects.push(ProxyObject::new(
            1,
            SemanticId::TABLE,
            Pose9D::from_yaw(Vector3::new(2.0, 2.0, 0.375), 0.3, Vector3::new(1.2, 0.8, 0.75)),
        ));
        l.connectors.push(Connector {
            instance_id: 100,
            kind: ConnectorKind::TemporaryWall,
            pose: Pose9D::from_yaw(Vector3::new(4.05, 2.0, 1.05), 0.0, Vector3::new(0.1, 1.0, 2.1)),
            room_a: 0,
            room_b: None,
        });
        l
    }

    fn room_b(x0: f64) -> SceneLayout {
        let mut l = SceneLayout::new("b", vec![Room::rectangle([x0, 0.0], [x0 + 3.0, 4.0], 0.0, 2.8, 0.1)]);
        l.objects.push(ProxyObject::new(
            1,
            SemanticId::CHAIR,
            Pose9D::from_yaw(Vector3::new(x0 + 1.5, 2.0, 0.45), 0.0, Vector3::new(0.5, 0.5, 0.9)),
        ));
        l
    }

    #[test]
    fn temporary_wall_becomes_an_opening() {
        let merged = expand_layout(&room_a(), &room_b(4.1), 100).unwrap();
        assert_eq!(merged.rooms.len(), 2);
        let c = merged.connector(100).unwrap();
        assert_eq!(c.kind, ConnectorKind::Opening);
        assert_eq!(c.room_b, Some(1));
        // Colliding id 1 from the addition was renumbered.
        let ids: Vec<u32> = merged.objects.iter().map(|o| o.instance_id).collect();
        assert_eq!(ids, vec![1, 101]);
        let probe = Vector3::new(4.05, 2.0, 1.0);
        assert!(wall_pieces(&merged).iter().all(|w| !w.obb.contains(&probe, 0.0)));
    }

    #[test]
    fn base_entities_are_untouched() {
        let base = room_a();
        let merged = expand_layout(&base, &room_b(4.1), 100).unwrap();
        assert_eq!(merged.objects[0], base.objects[0]);
        assert_eq!(merged.rooms[0], base.rooms[0]);
        assert_eq!(merged.connectors[0].pose, base.connectors[0].pose);
    }

    #[test]
    fn overlapping_addition_is_rejected() {
        let err = expand_layout(&room_a(), &room_b(3.6), 100).unwrap_err();
        assert!(matches!(err, Error::Expansion(_)), "{err}");
    }

    #[test]
    fn door_is_retained() {
        let mut base = room_a();
        base.connectors[0].kind = ConnectorKind::Door;
        let merged = expand_layout(&base, &room_b(4.1), 100).unwrap();
        assert_eq!(merged.connector(100).unwrap().kind, ConnectorKind::Door);
    }

    #[test]
    fn unknown_connector() {
        assert!(matches!(
            expand_layout(&room_a(), &room_b(4.1), 7),
            Err(Error::UnknownId(7))
        ));
    }

    #[test]
    fn removes_connector_points() {
        let layout = room_a();
        let mut positions = Vec::new();
        let mut instance = Vec::new();
        for i in 0..1000 {
            let f = i as f64 / 1000.0;
            if i % 25 < 3 {
                positions.push(Vector3::new(4.0, 1.6 + 0.8 * f, 1.0));
                instance.push(100);
            } else {
                positions.push(Vector3::new(1.0 + f, 1.0, 0.0));
                instance.push(2);
            }
        }
        let cloud = PointCloud {
            positions,
            instance: Some(instance),
            ..PointCloud::default()
        };
        let out = remove_labeled_points(&cloud, &layout, 100).unwrap();
        assert_eq!(out.len(), 880);
        assert!(out.instance.as_ref().unwrap().iter().all(|&i| i == 2));
        let empty = remove_labeled_points(&PointCloud::default(), &layout, 100).unwrap();
        assert_eq!(empty.len(), 0);
        assert!(remove_labeled_points(&cloud, &layout, 5).is_err());
    }

    #[test]
    fn unlabeled_points_near_the_box_are_removed() {
        let layout = room_a();
        let cloud = PointCloud {
            positions: vec![
                Vector3::new(4.0 - 0.005, 2.0, 1.0),
                Vector3::new(3.9, 2.0, 1.0),
                Vector3::new(4.05, 2.0, 2.5),
            ],
            ..PointCloud::default()
        };
        let out = remove_labeled_points(&cloud, &layout, 100).unwrap();
        assert_eq!(out.positions, vec![Vector3::new(3.9, 2.0, 1.0), Vector3::new(4.05, 2.0, 2.5)]);
    }
}
