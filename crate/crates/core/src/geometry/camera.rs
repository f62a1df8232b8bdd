use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole intrinsics with square pixels and the principal point at the
/// image center. `fov_deg` is the horizontal field of view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub width: u32,
    pub height: u32,
    pub fov_deg: f64,
}

impl Intrinsics {
    pub fn new(width: u32, height: u32, fov_deg: f64) -> Result<Self> {
        let intr = Intrinsics { width, height, fov_deg };
        intr.check()?;
        Ok(intr)
    }

    pub fn square(size: u32, fov_deg: f64) -> Self {
        Intrinsics {
            width: size,
            height: size,
            fov_deg,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::DegenerateInput("image size must be at least 1x1".into()));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::DegenerateInput(format!(
                "field of view {} outside (0, 180)",
                self.fov_deg
            )));
        }
        Ok(())
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        0.5 * self.width as f64 / (0.5 * self.fov_deg.to_radians()).tan()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * self.width as f64, 0.5 * self.height as f64)
    }

    /// Same field of view at another square resolution.
    pub fn with_size(&self, width: u32, height: u32) -> Self {
        Intrinsics { width, height, ..*self }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Camera-frame direction (unnormalized, forward component 1) through
    /// continuous image coordinates `(u, v)`.
    pub fn tangent_ray(&self, u: f64, v: f64) -> Vector3<f64> {
        let f = self.focal();
        let (cx, cy) = self.center();
        Vector3::new(1.0, (cx - u) / f, (cy - v) / f)
    }

    /// Continuous image coordinates of a camera-frame direction, `None`
    /// behind the camera.
    pub fn project_camera(&self, d: &Vector3<f64>) -> Option<(f64, f64)> {
        if d.x <= 0.0 {
            return None;
        }
        let f = self.focal();
        let (cx, cy) = self.center();
        Some((cx - f * d.y / d.x, cy - f * d.z / d.x))
    }
}

/// World-from-camera rigid transform. The camera looks along its local +X
/// with +Y to the left and +Z up; image `u` grows toward −Y and `v` toward −Z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: UnitQuaternion<f64>,
    pub position: Vector3<f64>,
}

impl Default for CameraPose {
    fn default() -> Self {
        CameraPose::identity()
    }
}

impl CameraPose {
    pub fn identity() -> Self {
        CameraPose {
            rotation: UnitQuaternion::identity(),
            position: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, position: Vector3<f64>) -> Self {
        CameraPose { rotation, position }
    }

    /// Level camera at `position` with heading `yaw` and elevation `pitch`
    /// (radians, positive looks up).
    pub fn from_yaw_pitch(position: Vector3<f64>, yaw: f64, pitch: f64) -> Self {
        let r = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw)
            * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -pitch);
        CameraPose::new(r, position)
    }

    pub fn forward(&self) -> Vector3<f64> {
        self.rotation * Vector3::x()
    }

    pub fn left(&self) -> Vector3<f64> {
        self.rotation * Vector3::y()
    }

    pub fn up(&self) -> Vector3<f64> {
        self.rotation * Vector3::z()
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse_transform_vector(&(p - self.position))
    }

    pub fn to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.position
    }

    /// Apply a rigid motion `t` on the left: `t ∘ self`.
    pub fn transformed(&self, rotation: &UnitQuaternion<f64>, translation: &Vector3<f64>) -> Self {
        CameraPose {
            rotation: rotation * self.rotation,
            position: rotation * self.position + translation,
        }
    }

    /// Geodesic angle to another rotation, radians.
    pub fn angle_to(&self, other: &CameraPose) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    /// Unit length.
    pub dir: Vector3<f64>,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.dir * t
    }
}

/// World-space ray through continuous image coordinates `(u, v)`; pixel
/// `(i, j)` has its center at `(i + 0.5, j + 0.5)`.
pub fn pixel_ray(intr: &Intrinsics, pose: &CameraPose, u: f64, v: f64) -> Ray {
    let d = pose.rotation * intr.tangent_ray(u, v);
    Ray {
        origin: pose.position,
        dir: d.normalize(),
    }
}

/// Ray through the center of pixel `(i, j)`.
pub fn pixel_center_ray(intr: &Intrinsics, pose: &CameraPose, i: usize, j: usize) -> Ray {
    pixel_ray(intr, pose, i as f64 + 0.5, j as f64 + 0.5)
}

/// Project a world point to continuous image coordinates.
pub fn project(intr: &Intrinsics, pose: &CameraPose, p: &Vector3<f64>) -> Option<(f64, f64)> {
    intr.project_camera(&pose.to_camera(p))
}

/// Camera at `position` looking at `target`, with no roll relative to `up`.
pub fn look_at(position: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<CameraPose> {
    let to = target - position;
    let dist = to.norm();
    if !(dist > 1e-12) {
        return Err(Error::DegenerateInput("look_at position equals target".into()));
    }
    let forward = to / dist;
    let left = up.cross(&forward);
    let n = left.norm();
    if !(n > 1e-12 * up.norm().max(1.0)) {
        return Err(Error::DegenerateInput("look_at up is parallel to the view direction".into()));
    }
    let left = left / n;
    let cam_up = forward.cross(&left);
    let m = Matrix3::from_columns(&[forward, left, cam_up]);
    let rot = Rotation3::from_matrix_unchecked(m);
    Ok(CameraPose::new(UnitQuaternion::from_rotation_matrix(&rot), position))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn center_pixel_looks_forward() {
        let intr = Intrinsics::square(64, 72.0);
        let ray = pixel_ray(&intr, &CameraPose::identity(), 32.0, 32.0);
        assert_relative_eq!(ray.dir, Vector3::x(), epsilon = 1e-15);
        assert!((ray.dir.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn corner_pixel_of_tiny_image() {
        // fov 90 on a 2x2 image: f = 1, pixel (0,0) center sits half a pixel
        // left of and above the principal point.
        let intr = Intrinsics::square(2, 90.0);
        let ray = pixel_center_ray(&intr, &CameraPose::identity(), 0, 0);
        let expected = Vector3::new(1.0, 0.5, 0.5).normalize();
        assert_relative_eq!(ray.dir, expected, epsilon = 1e-15);
        // Angle to the axis is atan(sqrt(0.5^2 + 0.5^2)).
        let angle = ray.dir.dot(&Vector3::x()).acos();
        assert!((angle - (0.5f64.hypot(0.5)).atan()).abs() < 1e-12);
    }

    #[test]
    fn yaw_rotates_rays() {
        let intr = Intrinsics::square(8, 60.0);
        let yawed = CameraPose::from_yaw_pitch(Vector3::zeros(), std::f64::consts::FRAC_PI_2, 0.0);
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        for (i, j) in [(0, 0), (3, 5), (7, 7)] {
            let a = pixel_center_ray(&intr, &CameraPose::identity(), i, j);
            let b = pixel_center_ray(&intr, &yawed, i, j);
            assert_relative_eq!(q * a.dir, b.dir, epsilon = 1e-14);
        }
    }

    #[test]
    fn look_at_forward_and_projection() {
        let pose = look_at(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros(), Vector3::z()).unwrap();
        assert_relative_eq!(pose.forward(), Vector3::new(-1.0, 0.0, 0.0), epsilon = 1e-15);
        let intr = Intrinsics::square(10, 50.0);
        let (u, v) = project(&intr, &pose, &Vector3::new(-3.0, 0.0, 0.0)).unwrap();
        assert!((u - 5.0).abs() < 1e-12 && (v - 5.0).abs() < 1e-12);
        assert!(project(&intr, &pose, &Vector3::new(3.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn look_at_rejects_degenerate() {
        assert!(look_at(Vector3::zeros(), Vector3::zeros(), Vector3::z()).is_err());
        assert!(look_at(Vector3::zeros(), Vector3::new(0.0, 0.0, 2.0), Vector3::z()).is_err());
    }
}
