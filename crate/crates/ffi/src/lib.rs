//! C ABI over proxykit.
//!
//! Every function returns a [`PkStatus`]; on failure a message for the
//! calling thread is available through [`pk_last_error_message`]. Objects are
//! opaque handles created by `pk_*_new`/`load` functions and released with the
//! matching `pk_*_free`. Poses are `position[3]` plus `quaternion[4]` in
//! `w, x, y, z` order; images are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use proxykit::align::{bisection_search, ScheduleConfig, SyntheticOracle};
use proxykit::geometry::{CameraPose, Intrinsics};
use proxykit::image::Image;
use proxykit::losses::{loss_3dgs, masked_depth_loss, nn_loss, NnCache};
use proxykit::plan::{partition_quadrants, plan_trajectory, PlannerConfig, Trajectory};
use proxykit::render::{Channel, RenderTarget, Scene};
use proxykit::scene::{generate_layout, load_layout, parse_layout, validate, GenSpec, SceneLayout};
use proxykit::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PkStatus {
    Ok = 0,
    NullArgument = 1,
    Io = 2,
    Parse = 3,
    Validation = 4,
    Config = 5,
    Planning = 6,
    Alignment = 7,
    Shape = 8,
    EmptyInput = 9,
    Other = 10,
    Panic = 11,
}

impl From<&Error> for PkStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => PkStatus::Io,
            Error::Parse(_) => PkStatus::Parse,
            Error::Validation { .. } => PkStatus::Validation,
            Error::Config(_) => PkStatus::Config,
            Error::NoValidPoses(_) | Error::DegenerateRoom { .. } => PkStatus::Planning,
            Error::OracleFailure { .. } => PkStatus::Alignment,
            Error::ShapeMismatch(_) | Error::LengthMismatch { .. } | Error::Dimension(_) => PkStatus::Shape,
            Error::EmptyReference | Error::EmptyOverlap | Error::DegenerateInput(_) => PkStatus::EmptyInput,
            _ => PkStatus::Other,
        }
    }
}

pub struct PkLayout(SceneLayout);
pub struct PkScene(Scene);
pub struct PkTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into_bytes());
}

struct Fail(PkStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(PkStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PkStatus::NullArgument, format!("{what} is null"))
}

/// Run `f`, record any error or panic, and return its status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            PkStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            PkStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(PkStatus::Parse, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn pose_arg(position: *const f64, quaternion: *const f64) -> Result<CameraPose, Fail> {
    let p = slice_arg(position, 3, "position")?;
    let q = slice_arg(quaternion, 4, "quaternion")?;
    let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
    if !((quat.norm() - 1.0).abs() <= 1e-6) || !p.iter().all(|v| v.is_finite()) {
        return Err(Fail(PkStatus::Config, "pose needs a finite position and a unit quaternion".into()));
    }
    Ok(CameraPose::new(UnitQuaternion::from_quaternion(quat), Vector3::new(p[0], p[1], p[2])))
}

unsafe fn points_arg(p: *const f64, count: usize, what: &str) -> Result<Vec<Vector3<f64>>, Fail> {
    let flat = slice_arg(p, count * 3, what)?;
    Ok(flat.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect())
}

fn boxed<T>(out: &mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes of the calling thread's last error message, without NUL.
#[no_mangle]
pub extern "C" fn pk_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copy the last error message into `buf` (NUL-terminated, truncated to
/// `len - 1` bytes). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pk_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pk_layout_load(path: *const c_char, out: *mut *mut PkLayout) -> PkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let layout = load_layout(str_arg(path, "path")?)?;
        boxed(out, PkLayout(layout));
        Ok(())
    })
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pk_layout_parse(json: *const c_char, out: *mut *mut PkLayout) -> PkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let layout = parse_layout(str_arg(json, "json")?)?;
        boxed(out, PkLayout(layout));
        Ok(())
    })
}

/// Procedural single-room layout with default generator settings.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pk_layout_generate(seed: u64, out: *mut *mut PkLayout) -> PkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        boxed(out, PkLayout(generate_layout(seed, &GenSpec::default())?));
        Ok(())
    })
}

/// # Safety
/// `layout` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pk_layout_validate(layout: *const PkLayout) -> PkStatus {
    guard(|| Ok(validate(&ref_arg(layout, "layout")?.0)?))
}

/// # Safety
/// `layout` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pk_layout_room_count(layout: *const PkLayout, out: *mut usize) -> PkStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(layout, "layout")?.0.rooms.len();
        Ok(())
    })
}

/// # Safety
/// `layout` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pk_layout_free(layout: *mut PkLayout) {
    if !layout.is_null() {
        drop(Box::from_raw(layout));
    }
}

/// Build the render acceleration structure of a layout.
///
/// # Safety
/// `layout` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pk_scene_new(layout: *const PkLayout, out: *mut *mut PkScene) -> PkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let layout = ref_arg(layout, "layout")?;
        validate(&layout.0)?;
        boxed(out, PkScene(Scene::new(&layout.0)));
        Ok(())
    })
}

/// # Safety
/// `scene` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pk_scene_free(scene: *mut PkScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Render depth (meters along the ray, +inf on miss) and semantic ids into
/// caller buffers of `width * height` elements. Either buffer may be null.
///
/// # Safety
/// Handles and pose arrays must be valid; non-null buffers must hold
/// `width * height` elements.
#[no_mangle]
pub unsafe extern "C" fn pk_scene_render(
    scene: *const PkScene,
    position: *const f64,
    quaternion: *const f64,
    width: u32,
    height: u32,
    fov_deg: f64,
    depth_out: *mut f64,
    semantic_out: *mut u8,
) -> PkStatus {
    guard(|| {
        let scene = ref_arg(scene, "scene")?;
        let pose = pose_arg(position, quaternion)?;
        let intr = Intrinsics::new(width, height, fov_deg)?;
        let mut channels = Vec::new();
        if !depth_out.is_null() {
            channels.push(Channel::Depth);
        }
        if !semantic_out.is_null() {
            channels.push(Channel::Semantic);
        }
        if channels.is_empty() {
            return Err(null("depth_out and semantic_out"));
        }
        let r = scene.0.render(&RenderTarget::new(intr, pose, &channels))?;
        let n = width as usize * height as usize;
        if let Some(d) = r.depth {
            std::slice::from_raw_parts_mut(depth_out, n).copy_from_slice(d.pixels());
        }
        if let Some(s) = r.semantic {
            let dst = std::slice::from_raw_parts_mut(semantic_out, n);
            for (o, v) in dst.iter_mut().zip(s.pixels()) {
                *o = v.id();
            }
        }
        Ok(())
    })
}

/// Plan the trajectory of one quadrant (0..4) of a room with default
/// planner settings at `image_size` pixels.
///
/// # Safety
/// `layout` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pk_plan_quadrant(
    layout: *const PkLayout,
    room: usize,
    quadrant: usize,
    image_size: u32,
    out: *mut *mut PkTrajectory,
) -> PkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let layout = &ref_arg(layout, "layout")?.0;
        validate(layout)?;
        let quads = partition_quadrants(layout, room)?;
        let q = quads
            .get(quadrant)
            .ok_or_else(|| Fail(PkStatus::Config, format!("quadrant {quadrant} is not in 0..4")))?;
        let cfg = PlannerConfig { image_size, ..Default::default() };
        cfg.check()?;
        boxed(out, PkTrajectory(plan_trajectory(layout, q, &cfg)?));
        Ok(())
    })
}

/// # Safety
/// `trajectory` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pk_trajectory_len(trajectory: *const PkTrajectory, out: *mut usize) -> PkStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(trajectory, "trajectory")?.0.poses.len();
        Ok(())
    })
}

/// # Safety
/// `trajectory` must be a live handle; `position` and `quaternion` must hold
/// 3 and 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pk_trajectory_pose(
    trajectory: *const PkTrajectory,
    index: usize,
    position: *mut f64,
    quaternion: *mut f64,
) -> PkStatus {
    guard(|| {
        let t = &ref_arg(trajectory, "trajectory")?.0;
        let pose = t
            .poses
            .get(index)
            .ok_or_else(|| Fail(PkStatus::Shape, format!("pose {index} of {}", t.poses.len())))?;
        if position.is_null() || quaternion.is_null() {
            return Err(null("position or quaternion"));
        }
        let q = pose.rotation.quaternion();
        std::slice::from_raw_parts_mut(position, 3).copy_from_slice(pose.position.as_slice());
        std::slice::from_raw_parts_mut(quaternion, 4).copy_from_slice(&[q.w, q.i, q.j, q.k]);
        Ok(())
    })
}

/// # Safety
/// `trajectory` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pk_trajectory_free(trajectory: *mut PkTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

/// Camera-scale search against a synthetic oracle whose true scale is
/// `theta_true`, with the default schedule.
///
/// # Safety
/// Handles must be live; outputs must be writable (`loss_out` may be null).
#[no_mangle]
pub unsafe extern "C" fn pk_align_synthetic(
    scene: *const PkScene,
    trajectory: *const PkTrajectory,
    theta_true: f64,
    theta_out: *mut f64,
    loss_out: *mut f64,
) -> PkStatus {
    guard(|| {
        let scene = &ref_arg(scene, "scene")?.0;
        let t = &ref_arg(trajectory, "trajectory")?.0;
        let theta_out = out_arg(theta_out, "theta_out")?;
        let oracle = SyntheticOracle::new(scene.clone(), theta_true)?;
        let (theta, trace) = bisection_search(&oracle, t, scene, &ScheduleConfig::default())?;
        *theta_out = theta;
        if let Some(l) = loss_out.as_mut() {
            *l = trace.loss_star;
        }
        Ok(())
    })
}

/// Mean square-root nearest-neighbor distance of `means` (`mean_count`
/// xyz triples) to `reference` (`ref_count` triples).
///
/// # Safety
/// Arrays must hold the stated number of triples; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pk_nn_loss(
    means: *const f64,
    mean_count: usize,
    reference: *const f64,
    ref_count: usize,
    out: *mut f64,
) -> PkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = points_arg(means, mean_count, "means")?;
        let r = points_arg(reference, ref_count, "reference")?;
        *out = nn_loss(&m, &r, &mut NnCache::default(), 0)?;
        Ok(())
    })
}

/// Photometric loss of two `width * height` images with 1 or 3 interleaved
/// channels in [0, 1].
///
/// # Safety
/// Images must hold `width * height * channels` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pk_loss_3dgs(
    image: *const f64,
    target: *const f64,
    width: usize,
    height: usize,
    channels: usize,
    lambda: f64,
    out: *mut f64,
) -> PkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let n = width * height;
        let a = slice_arg(image, n * channels, "image")?;
        let b = slice_arg(target, n * channels, "target")?;
        *out = match channels {
            1 => loss_3dgs(&Image::from_vec(width, height, a.to_vec())?, &Image::from_vec(width, height, b.to_vec())?, lambda)?,
            3 => {
                let rgb = |s: &[f64]| Image::from_vec(width, height, s.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect());
                loss_3dgs(&rgb(a)?, &rgb(b)?, lambda)?
            }
            _ => return Err(Fail(PkStatus::Shape, format!("{channels} channels; expected 1 or 3"))),
        };
        Ok(())
    })
}

/// Masked mean absolute depth error; `mask` holds 0/1 bytes. `empty_out`
/// (may be null) is set to 1 when the mask selects nothing.
///
/// # Safety
/// Buffers must hold `width * height` elements; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pk_masked_depth_loss(
    rendered: *const f64,
    proxy: *const f64,
    mask: *const u8,
    width: usize,
    height: usize,
    out: *mut f64,
    empty_out: *mut i32,
) -> PkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let n = width * height;
        let rd = Image::from_vec(width, height, slice_arg(rendered, n, "rendered")?.to_vec())?;
        let gt = Image::from_vec(width, height, slice_arg(proxy, n, "proxy")?.to_vec())?;
        let m = Image::from_vec(width, height, slice_arg(mask, n, "mask")?.iter().map(|&v| v != 0).collect())?;
        let l = masked_depth_loss(&rd, &gt, &m)?;
        *out = l.value;
        if let Some(e) = empty_out.as_mut() {
            *e = l.empty_mask as i32;
        }
        Ok(())
    })
}
