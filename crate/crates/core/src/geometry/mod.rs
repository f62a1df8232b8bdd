//! Cameras, cubemaps and pose interpolation.

pub mod camera;
pub mod cubemap;
pub mod interp;

pub use camera::{look_at, pixel_center_ray, pixel_ray, project, CameraPose, Intrinsics, Ray};
pub use cubemap::{
    crop_overlap, cubemap_to_equirect, equirect_to_cubemap, pixel_solid_angle, xyz_positional_encoding, Cubemap,
    CubemapRig, Face,
};
pub use interp::interpolate_poses;
