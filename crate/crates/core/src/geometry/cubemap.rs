//! Six-face cube panoramas: rig geometry, positional encodings, and
//! resampling to and from equirectangular images.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rayon::prelude::*;

use super::camera::{pixel_center_ray, CameraPose, Intrinsics};
use crate::error::{Error, Result};
use crate::image::{Image, Texel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Face {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
}

impl Face {
    pub const ALL: [Face; 6] = [Face::PosX, Face::NegX, Face::PosY, Face::NegY, Face::PosZ, Face::NegZ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// File-name suffix.
    pub fn suffix(self) -> &'static str {
        match self {
            Face::PosX => "px",
            Face::NegX => "nx",
            Face::PosY => "py",
            Face::NegY => "ny",
            Face::PosZ => "pz",
            Face::NegZ => "nz",
        }
    }

    /// Face orientation in the rig frame, columns (forward, left, up).
    /// Side faces keep +Z up; the top face has its image-up toward −X and the
    /// bottom face toward +X so both meet the +X face along a shared edge.
    pub fn rotation(self) -> UnitQuaternion<f64> {
        let (f, l, u) = match self {
            Face::PosX => (Vector3::x(), Vector3::y(), Vector3::z()),
            Face::NegX => (-Vector3::x(), -Vector3::y(), Vector3::z()),
            Face::PosY => (Vector3::y(), -Vector3::x(), Vector3::z()),
            Face::NegY => (-Vector3::y(), Vector3::x(), Vector3::z()),
            Face::PosZ => (Vector3::z(), Vector3::y(), -Vector3::x()),
            Face::NegZ => (-Vector3::z(), Vector3::y(), Vector3::x()),
        };
        let m = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[f, l, u]));
        UnitQuaternion::from_rotation_matrix(&m)
    }

    /// Face whose forward axis is closest to a rig-frame direction.
    pub fn dominant(d: &Vector3<f64>) -> Face {
        let a = d.abs();
        if a.x >= a.y && a.x >= a.z {
            if d.x >= 0.0 { Face::PosX } else { Face::NegX }
        } else if a.y >= a.z {
            if d.y >= 0.0 { Face::PosY } else { Face::NegY }
        } else if d.z >= 0.0 {
            Face::PosZ
        } else {
            Face::NegZ
        }
    }
}

/// Six cameras sharing a center and a yaw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubemapRig {
    pub center: Vector3<f64>,
    /// Heading of the +X face about world +Z, radians.
    pub yaw: f64,
    pub face_fov_deg: f64,
}

impl CubemapRig {
    pub fn new(center: Vector3<f64>, face_fov_deg: f64) -> Self {
        CubemapRig {
            center,
            yaw: 0.0,
            face_fov_deg,
        }
    }

    fn yaw_rotation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.yaw)
    }

    pub fn face_pose(&self, face: Face) -> CameraPose {
        CameraPose::new(self.yaw_rotation() * face.rotation(), self.center)
    }

    pub fn face_poses(&self) -> [CameraPose; 6] {
        Face::ALL.map(|f| self.face_pose(f))
    }

    pub fn intrinsics(&self, face_size: u32) -> Intrinsics {
        Intrinsics::square(face_size, self.face_fov_deg)
    }

    /// Face and continuous pixel coordinates seen along a world direction.
    pub fn locate(&self, dir: &Vector3<f64>, face_size: u32) -> (Face, f64, f64) {
        let local = self.yaw_rotation().inverse_transform_vector(dir);
        let face = Face::dominant(&local);
        let cam = face.rotation().inverse_transform_vector(&local);
        let (u, v) = self
            .intrinsics(face_size)
            .project_camera(&cam)
            .expect("dominant face is in front");
        (face, u, v)
    }
}

/// Six equally sized square faces in [`Face::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Cubemap<T> {
    pub faces: Vec<Image<T>>,
    pub face_fov_deg: f64,
}

impl<T: Copy> Cubemap<T> {
    pub fn new(faces: Vec<Image<T>>, face_fov_deg: f64) -> Result<Self> {
        if faces.len() != 6 {
            return Err(Error::Dimension(format!("cubemap needs 6 faces, got {}", faces.len())));
        }
        let (w, h) = faces[0].dims();
        if w != h || faces.iter().any(|f| f.dims() != (w, h)) {
            return Err(Error::Dimension("cubemap faces must be equal squares".into()));
        }
        Ok(Cubemap { faces, face_fov_deg })
    }

    pub fn face(&self, face: Face) -> &Image<T> {
        &self.faces[face.index()]
    }

    pub fn face_size(&self) -> usize {
        self.faces[0].width()
    }
}

/// Per-pixel unit world direction of each face's pixel-center ray. Uses the
/// same ray code as rendering, so encodings and renders agree exactly.
pub fn xyz_positional_encoding(rig: &CubemapRig, face_size: u32) -> Cubemap<[f64; 3]> {
    let intr = rig.intrinsics(face_size);
    let n = face_size as usize;
    let faces = Face::ALL
        .iter()
        .map(|&face| {
            let pose = rig.face_pose(face);
            Image::from_fn(n, n, |i, j| pixel_center_ray(&intr, &pose, i, j).dir.into())
        })
        .collect();
    Cubemap {
        faces,
        face_fov_deg: rig.face_fov_deg,
    }
}

/// Equirectangular mapping: column 0 starts at longitude +π and longitude
/// decreases to the right (the image center column looks along +X); row 0 is
/// the zenith.
pub fn equirect_direction(width: usize, height: usize, x: f64, y: f64) -> Vector3<f64> {
    let lon = std::f64::consts::PI * (1.0 - 2.0 * x / width as f64);
    let lat = std::f64::consts::PI * (0.5 - y / height as f64);
    Vector3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin())
}

pub fn equirect_coords(width: usize, height: usize, d: &Vector3<f64>) -> (f64, f64) {
    let lon = d.y.atan2(d.x);
    let lat = (d.z / d.norm()).clamp(-1.0, 1.0).asin();
    let x = width as f64 * (std::f64::consts::PI - lon) / std::f64::consts::TAU;
    let y = height as f64 * (0.5 - lat / std::f64::consts::PI);
    (x.rem_euclid(width as f64), y)
}

/// Resample an equirectangular panorama (`W = 2H`) into six faces.
pub fn equirect_to_cubemap<T: Texel>(img: &Image<T>, face_size: u32, face_fov_deg: f64) -> Result<Cubemap<T>> {
    let (w, h) = img.dims();
    if w != 2 * h || h == 0 {
        return Err(Error::Dimension(format!("equirectangular image must be 2:1, got {w}x{h}")));
    }
    let rig = CubemapRig::new(Vector3::zeros(), face_fov_deg);
    let intr = rig.intrinsics(face_size);
    let n = face_size as usize;
    let faces = Face::ALL
        .iter()
        .map(|&face| {
            let pose = rig.face_pose(face);
            let data: Vec<T> = (0..n * n)
                .into_par_iter()
                .map(|k| {
                    let d = pixel_center_ray(&intr, &pose, k % n, k / n).dir;
                    let (x, y) = equirect_coords(w, h, &d);
                    img.sample(x, y, true)
                })
                .collect();
            Image::from_vec(n, n, data).expect("sized")
        })
        .collect();
    Ok(Cubemap { faces, face_fov_deg })
}

/// Resample six faces into a `2H × H` equirectangular panorama.
pub fn cubemap_to_equirect<T: Texel>(cube: &Cubemap<T>, height: usize) -> Image<T> {
    let width = 2 * height;
    let rig = CubemapRig::new(Vector3::zeros(), cube.face_fov_deg);
    let size = cube.face_size() as u32;
    let data: Vec<T> = (0..width * height)
        .into_par_iter()
        .map(|k| {
            let d = equirect_direction(width, height, (k % width) as f64 + 0.5, (k / width) as f64 + 0.5);
            let (face, u, v) = rig.locate(&d, size);
            cube.face(face).sample(u, v, false)
        })
        .collect();
    Image::from_vec(width, height, data).expect("sized")
}

/// Where output pixel `(i, j)` of the cropped face samples the source face.
/// Both faces share an orientation, so the mapping is a scale about the
/// principal point in tangent space.
pub fn crop_source_coords(src: &Intrinsics, dst: &Intrinsics, i: usize, j: usize) -> (f64, f64) {
    let t = dst.tangent_ray(i as f64 + 0.5, j as f64 + 0.5);
    src.project_camera(&t).expect("forward ray")
}

/// Crop overlapping (wider than 90°) faces back to a seamless 90° cubemap of
/// `out_size` pixels per side.
pub fn crop_overlap<T: Texel>(cube: &Cubemap<T>, out_size: u32) -> Result<Cubemap<T>> {
    if cube.face_fov_deg < 90.0 {
        return Err(Error::Dimension(format!(
            "faces of {}° cannot cover a 90° cubemap",
            cube.face_fov_deg
        )));
    }
    let src = Intrinsics::square(cube.face_size() as u32, cube.face_fov_deg);
    let dst = Intrinsics::square(out_size, 90.0);
    let n = out_size as usize;
    let faces = cube
        .faces
        .iter()
        .map(|face| {
            Image::from_fn(n, n, |i, j| {
                let (u, v) = crop_source_coords(&src, &dst, i, j);
                face.sample(u, v, false)
            })
        })
        .collect();
    Ok(Cubemap {
        faces,
        face_fov_deg: 90.0,
    })
}

/// Solid angle subtended by pixel `(i, j)` of a face (exact, via the
/// tangent-plane area formula).
pub fn pixel_solid_angle(intr: &Intrinsics, i: usize, j: usize) -> f64 {
    // Integral of dA / (1 + x^2 + y^2)^{3/2} over a rectangle has the closed
    // form atan(xy / sqrt(1 + x^2 + y^2)) evaluated at the corners.
    let f = intr.focal();
    let (cx, cy) = intr.center();
    let x0 = (i as f64 - cx) / f;
    let x1 = (i as f64 + 1.0 - cx) / f;
    let y0 = (j as f64 - cy) / f;
    let y1 = (j as f64 + 1.0 - cy) / f;
    let g = |x: f64, y: f64| (x * y / (1.0 + x * x + y * y).sqrt()).atan();
    g(x1, y1) - g(x0, y1) - g(x1, y0) + g(x0, y0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn face_centers_are_signed_axes() {
        let enc = xyz_positional_encoding(&CubemapRig::new(Vector3::zeros(), 90.0), 4);
        let expected = [
            Vector3::x(),
            -Vector3::x(),
            Vector3::y(),
            -Vector3::y(),
            Vector3::z(),
            -Vector3::z(),
        ];
        // Even size: average the four central pixels.
        for (face, axis) in enc.faces.iter().zip(expected) {
            let mut c = Vector3::zeros();
            for (i, j) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
                c += Vector3::from(face.get(i, j));
            }
            assert_relative_eq!(c.normalize(), axis, epsilon = 1e-12);
        }
        // Odd size: the center pixel itself.
        let odd = xyz_positional_encoding(&CubemapRig::new(Vector3::zeros(), 90.0), 5);
        assert_relative_eq!(Vector3::from(odd.face(Face::PosZ).get(2, 2)), Vector3::z(), epsilon = 1e-15);
    }

    #[test]
    fn rotations_are_proper() {
        for f in Face::ALL {
            let m = f.rotation().to_rotation_matrix();
            assert!((m.matrix().determinant() - 1.0).abs() < 1e-12);
            assert_eq!(Face::dominant(&(f.rotation() * Vector3::x())), f);
        }
    }

    #[test]
    fn constant_equirect_gives_constant_faces() {
        let img = Image::filled(64, 32, 0.75);
        let cube = equirect_to_cubemap(&img, 16, 95.0).unwrap();
        assert!(cube.faces.iter().all(|f| f.pixels().iter().all(|&v| (v - 0.75).abs() < 1e-12)));
        assert!(matches!(
            equirect_to_cubemap(&Image::filled(60, 32, 0.0), 16, 90.0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn equirect_mapping_inverts() {
        for (x, y) in [(10.5, 3.5), (100.25, 60.0), (0.75, 127.5)] {
            let d = equirect_direction(256, 128, x, y);
            let (x2, y2) = equirect_coords(256, 128, &d);
            assert!((x - x2).abs() < 1e-9 && (y - y2).abs() < 1e-9);
        }
        let center = equirect_direction(256, 128, 128.0, 64.0);
        assert_relative_eq!(center, Vector3::x(), epsilon = 1e-12);
    }

    #[test]
    fn pixel_solid_angles_sum_to_face() {
        // A 90° face covers one sixth of the sphere.
        let intr = Intrinsics::square(16, 90.0);
        let total: f64 = (0..16)
            .flat_map(|j| (0..16).map(move |i| (i, j)))
            .map(|(i, j)| pixel_solid_angle(&intr, i, j))
            .sum();
        assert!((total - 4.0 * std::f64::consts::PI / 6.0).abs() < 1e-12);
    }
}
