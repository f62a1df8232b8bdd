use nalgebra::{Matrix3, Vector3};

use super::Pose9D;

/// Oriented box: center, local axes as matrix columns, half extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obb {
    pub center: Vector3<f64>,
    pub axes: Matrix3<f64>,
    pub half: Vector3<f64>,
}

impl Obb {
    pub fn new(center: Vector3<f64>, axes: Matrix3<f64>, half: Vector3<f64>) -> Self {
        Obb { center, axes, half }
    }

    pub fn from_pose(pose: &Pose9D) -> Self {
        Obb {
            center: pose.position(),
            axes: pose.rotation().to_rotation_matrix().into_inner(),
            half: pose.scale() * 0.5,
        }
    }

    pub fn axis_aligned(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Obb {
            center: (min + max) * 0.5,
            axes: Matrix3::identity(),
            half: (max - min) * 0.5,
        }
    }

    pub fn to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.axes.transpose() * (p - self.center)
    }

    pub fn contains(&self, p: &Vector3<f64>, margin: f64) -> bool {
        let l = self.to_local(p);
        (0..3).all(|i| l[i].abs() <= self.half[i] + margin)
    }

    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let mut out = [Vector3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let s = Vector3::new(
                if i & 1 == 0 { -1.0 } else { 1.0 },
                if i & 2 == 0 { -1.0 } else { 1.0 },
                if i & 4 == 0 { -1.0 } else { 1.0 },
            );
            *c = self.center + self.axes * s.component_mul(&self.half);
        }
        out
    }

    /// World-space axis-aligned bounds.
    pub fn aabb(&self) -> (Vector3<f64>, Vector3<f64>) {
        let extent = self.axes.abs() * self.half;
        (self.center - extent, self.center + extent)
    }

    /// Euclidean distance from `p` to the solid box (0 inside).
    pub fn distance_to(&self, p: &Vector3<f64>) -> f64 {
        let l = self.to_local(p);
        let d = Vector3::from_fn(|i, _| (l[i].abs() - self.half[i]).max(0.0));
        d.norm()
    }

    /// Projection radius of the box onto a unit axis.
    fn radius_on(&self, axis: &Vector3<f64>) -> f64 {
        (0..3)
            .map(|i| self.half[i] * self.axes.column(i).dot(axis).abs())
            .sum()
    }

    /// Separating-axis test: true when the solids interpenetrate by more than
    /// `tol` along every candidate axis. Touching boxes do not overlap.
    pub fn overlaps(&self, other: &Obb, tol: f64) -> bool {
        let mut axes: Vec<Vector3<f64>> = Vec::with_capacity(15);
        for i in 0..3 {
            axes.push(self.axes.column(i).into_owned());
            axes.push(other.axes.column(i).into_owned());
        }
        for i in 0..3 {
            for j in 0..3 {
                let c = self.axes.column(i).cross(&other.axes.column(j));
                let n = c.norm();
                if n > 1e-9 {
                    axes.push(c / n);
                }
            }
        }
        let delta = other.center - self.center;
        axes.iter().all(|a| {
            let gap = delta.dot(a).abs() - self.radius_on(a) - other.radius_on(a);
            gap < -tol
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, UnitQuaternion};

    #[test]
    fn axis_aligned_overlap() {
        let a = Obb::axis_aligned(Vector3::zeros(), Vector3::repeat(1.0));
        let b = Obb::axis_aligned(Vector3::new(0.5, 0.5, 0.5), Vector3::repeat(1.5));
        let touching = Obb::axis_aligned(Vector3::new(1.0, 0.0, 0.0), Vector3::new(2.0, 1.0, 1.0));
        assert!(a.overlaps(&b, 1e-9));
        assert!(!a.overlaps(&touching, 1e-9));
    }

    #[test]
    fn rotated_box_separated_by_cross_axis() {
        // Two long thin bars crossing in projection but offset vertically.
        let r = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.7);
        let a = Obb::new(Vector3::zeros(), Matrix3::identity(), Vector3::new(2.0, 0.1, 0.1));
        let b = Obb::new(
            Vector3::new(0.0, 0.0, 0.25),
            r.to_rotation_matrix().into_inner(),
            Vector3::new(2.0, 0.1, 0.1),
        );
        assert!(!a.overlaps(&b, 1e-9));
        let b_low = Obb { center: Vector3::new(0.0, 0.0, 0.15), ..b };
        assert!(a.overlaps(&b_low, 1e-9));
    }

    #[test]
    fn distance_and_bounds() {
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_4);
        let b = Obb::new(Vector3::zeros(), rot.into_inner(), Vector3::new(1.0, 1.0, 1.0));
        let (lo, hi) = b.aabb();
        assert!((hi.x - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert!((lo.z + 1.0).abs() < 1e-12);
        assert_eq!(b.distance_to(&Vector3::zeros()), 0.0);
        assert!((b.distance_to(&Vector3::new(0.0, 0.0, 3.0)) - 2.0).abs() < 1e-12);
    }
}
