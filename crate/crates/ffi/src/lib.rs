//! C ABI over `lidarmotion`.
//!
//! Every entry point returns an [`LmStatus`]. On failure the message is kept
//! per thread and can be read with [`lm_last_error`]. Point clouds cross the
//! boundary as opaque [`LmPointCloud`] handles owned by the caller and
//! released with [`lm_cloud_free`]. Panics are caught and reported as
//! [`LmStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lidarmotion::baselines::{icp, IcpConfig};
use lidarmotion::decoder::{ground_iou, OrientedBox};
use lidarmotion::pcio::{read_velodyne_bin, write_velodyne_bin, PointCloud};
use lidarmotion::rigidmotion::{local_to_world, planar_flow, stationarity_experiment, world_to_local, PlanarRigidMotion, Vec2, Vec3};
use lidarmotion::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Degenerate = 5,
    FrameMismatch = 6,
    Precondition = 7,
    Internal = 99,
}

impl From<&Error> for LmStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => LmStatus::Io,
            Error::Format { .. } | Error::Mesh { .. } | Error::Manifest(_) | Error::NonFinite { .. } => LmStatus::Format,
            Error::Degenerate(_) | Error::NoMotion { .. } | Error::NoBackground | Error::PlacementExhausted { .. } => {
                LmStatus::Degenerate
            }
            Error::FrameMismatch(_) => LmStatus::FrameMismatch,
            Error::Precondition(_) => LmStatus::Precondition,
            Error::Config(_) | Error::LengthMismatch { .. } | Error::InvalidArgument(_) => LmStatus::InvalidArgument,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording any error or panic for [`lm_last_error`].
fn guard(f: impl FnOnce() -> Result<(), (LmStatus, String)>) -> LmStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LmStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            LmStatus::Internal
        }
    }
}

fn lib_err(e: Error) -> (LmStatus, String) {
    (LmStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (LmStatus, String) {
    (LmStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (LmStatus, String) {
    (LmStatus::InvalidArgument, msg.into())
}

/// Message for the most recent failure on this thread, or null after a
/// success. Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn lm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Opaque point cloud.
pub struct LmPointCloud {
    inner: PointCloud,
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a str, (LmStatus, String)> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not valid UTF-8"))
}

fn hand_out(cloud: PointCloud, out: *mut *mut LmPointCloud) {
    // SAFETY: callers check `out` for null first.
    unsafe { *out = Box::into_raw(Box::new(LmPointCloud { inner: cloud })) };
}

/// Reads a Velodyne `.bin` scan.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lm_cloud_read_bin(path: *const c_char, out: *mut *mut LmPointCloud) -> LmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path)?;
        hand_out(read_velodyne_bin(path).map_err(lib_err)?, out);
        Ok(())
    })
}

/// Writes a cloud as a Velodyne `.bin` scan.
///
/// # Safety
/// `cloud` must come from this library; `path` must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn lm_cloud_write_bin(cloud: *const LmPointCloud, path: *const c_char) -> LmStatus {
    guard(|| {
        let cloud = cloud.as_ref().ok_or_else(|| null("cloud"))?;
        write_velodyne_bin(&cloud.inner, path_arg(path)?).map_err(lib_err)
    })
}

/// Builds a cloud from `n` interleaved `x, y, z` triples. `reflectance` may
/// be null; otherwise it holds `n` values.
///
/// # Safety
/// `xyz` must point to `3 * n` doubles and `reflectance`, when non-null, to
/// `n` floats.
#[no_mangle]
pub unsafe extern "C" fn lm_cloud_from_xyz(
    xyz: *const f64,
    n: usize,
    reflectance: *const f32,
    out: *mut *mut LmPointCloud,
) -> LmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let coords: &[f64] = if n == 0 {
            &[]
        } else if xyz.is_null() {
            return Err(null("xyz"));
        } else {
            std::slice::from_raw_parts(xyz, 3 * n)
        };
        let points = coords.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
        let refl = (!reflectance.is_null() && n > 0).then(|| std::slice::from_raw_parts(reflectance, n).to_vec());
        hand_out(PointCloud::new(points, refl, "ffi").map_err(lib_err)?, out);
        Ok(())
    })
}

/// Number of points, or 0 for a null handle.
///
/// # Safety
/// `cloud` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn lm_cloud_len(cloud: *const LmPointCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.inner.len())
}

/// Copies point `index` into `xyz[0..3]`.
///
/// # Safety
/// `cloud` must come from this library and `xyz` hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn lm_cloud_point(cloud: *const LmPointCloud, index: usize, xyz: *mut f64) -> LmStatus {
    guard(|| {
        let cloud = cloud.as_ref().ok_or_else(|| null("cloud"))?;
        if xyz.is_null() {
            return Err(null("xyz"));
        }
        let p = cloud
            .inner
            .points
            .get(index)
            .ok_or_else(|| invalid(format!("index {index} out of range for {} points", cloud.inner.len())))?;
        std::slice::from_raw_parts_mut(xyz, 3).copy_from_slice(&[p.x, p.y, p.z]);
        Ok(())
    })
}

/// Releases a cloud. Null is a no-op.
///
/// # Safety
/// `cloud` must be null or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn lm_cloud_free(cloud: *mut LmPointCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Planar rigid motion. When `is_local` is nonzero the motion acts about
/// `(origin_x, origin_y)`; otherwise about the world origin and the origin
/// fields are ignored.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LmPlanarMotion {
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    pub is_local: u8,
}

impl From<&LmPlanarMotion> for PlanarRigidMotion {
    fn from(m: &LmPlanarMotion) -> Self {
        let t = Vec2::new(m.tx, m.ty);
        if m.is_local != 0 {
            PlanarRigidMotion::local(m.theta, t, Vec2::new(m.origin_x, m.origin_y))
        } else {
            PlanarRigidMotion::world(m.theta, t)
        }
    }
}

impl From<&PlanarRigidMotion> for LmPlanarMotion {
    fn from(m: &PlanarRigidMotion) -> Self {
        let o = m.origin.origin();
        LmPlanarMotion {
            theta: m.theta,
            tx: m.translation[0],
            ty: m.translation[1],
            origin_x: o.x,
            origin_y: o.y,
            is_local: u8::from(!m.is_world()),
        }
    }
}

/// Re-expresses a local motion about the world origin.
///
/// # Safety
/// `local` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn lm_local_to_world(local: *const LmPlanarMotion, out: *mut LmPlanarMotion) -> LmStatus {
    guard(|| {
        let m = local.as_ref().ok_or_else(|| null("local"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if m.is_local == 0 {
            return Err((LmStatus::FrameMismatch, "input motion is already world-tagged".into()));
        }
        *out = (&local_to_world(&m.into())).into();
        Ok(())
    })
}

/// Re-expresses a world motion about `(origin_x, origin_y)`.
///
/// # Safety
/// `world` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn lm_world_to_local(
    world: *const LmPlanarMotion,
    origin_x: f64,
    origin_y: f64,
    out: *mut LmPlanarMotion,
) -> LmStatus {
    guard(|| {
        let m = world.as_ref().ok_or_else(|| null("world"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let local = world_to_local(&m.into(), Vec2::new(origin_x, origin_y)).map_err(lib_err)?;
        *out = (&local).into();
        Ok(())
    })
}

/// Planar flow of point `(px, py)` under `motion` about origin `(ox, oy)`.
///
/// # Safety
/// `motion` must be valid and `flow` hold 2 doubles.
#[no_mangle]
pub unsafe extern "C" fn lm_planar_flow(
    px: f64,
    py: f64,
    ox: f64,
    oy: f64,
    motion: *const LmPlanarMotion,
    flow: *mut f64,
) -> LmStatus {
    guard(|| {
        let m = motion.as_ref().ok_or_else(|| null("motion"))?;
        if flow.is_null() {
            return Err(null("flow"));
        }
        let v = planar_flow(&Vec2::new(px, py), &Vec2::new(ox, oy), &m.into());
        std::slice::from_raw_parts_mut(flow, 2).copy_from_slice(&[v.x, v.y]);
        Ok(())
    })
}

/// Spatial rigid motion `x -> R x + t`, rotation stored row-major.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LmRigidMotion {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

/// Point-to-point ICP aligning `src` onto `dst`. Pass `max_iter = 0` or a
/// negative `tol` to use the defaults. `iterations` may be null.
///
/// # Safety
/// Handles must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lm_icp(
    src: *const LmPointCloud,
    dst: *const LmPointCloud,
    max_iter: usize,
    tol: f64,
    out: *mut LmRigidMotion,
    iterations: *mut usize,
) -> LmStatus {
    guard(|| {
        let src = src.as_ref().ok_or_else(|| null("src"))?;
        let dst = dst.as_ref().ok_or_else(|| null("dst"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let mut cfg = IcpConfig::default();
        if max_iter > 0 {
            cfg.max_iter = max_iter;
        }
        if tol >= 0.0 {
            cfg.tol = tol;
        }
        let r = icp(&src.inner.points, &dst.inner.points, &cfg).map_err(lib_err)?;
        let m = r.motion;
        for i in 0..3 {
            for j in 0..3 {
                out.rotation[3 * i + j] = m.rotation[(i, j)];
            }
        }
        out.translation = [m.translation.x, m.translation.y, m.translation.z];
        if let Some(it) = iterations.as_mut() {
            *it = r.iterations;
        }
        Ok(())
    })
}

/// Ground-plane oriented box: center, length/width/height, yaw.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LmBox {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
}

impl LmBox {
    fn to_box(self) -> Result<OrientedBox, (LmStatus, String)> {
        let b = OrientedBox::new(Vec3::from(self.center), self.size, self.yaw, 1.0);
        b.validate().map_err(lib_err)?;
        Ok(b)
    }
}

/// Bird's-eye-view IoU of two rotated boxes.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lm_ground_iou(a: *const LmBox, b: *const LmBox, out: *mut f64) -> LmStatus {
    guard(|| {
        let a = a.as_ref().ok_or_else(|| null("a"))?.to_box()?;
        let b = b.as_ref().ok_or_else(|| null("b"))?.to_box()?;
        *out.as_mut().ok_or_else(|| null("out"))? = ground_iou(&a, &b);
        Ok(())
    })
}

/// One row of [`lm_stationarity_experiment`].
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LmSpreadRow {
    pub theta: f64,
    pub world_spread: f64,
    pub local_spread: f64,
    pub closed_form: f64,
}

/// Spread of inferred world-frame and local-frame motion targets over a
/// `grid_n x grid_n` lattice, one row per angle. `rows` receives
/// `n_thetas` entries.
///
/// # Safety
/// `thetas` must hold `n_thetas` doubles and `rows` room for as many rows.
#[no_mangle]
pub unsafe extern "C" fn lm_stationarity_experiment(
    grid_n: usize,
    spacing: f64,
    thetas: *const f64,
    n_thetas: usize,
    rows: *mut LmSpreadRow,
) -> LmStatus {
    guard(|| {
        if n_thetas == 0 {
            return Ok(());
        }
        if thetas.is_null() {
            return Err(null("thetas"));
        }
        if rows.is_null() {
            return Err(null("rows"));
        }
        let thetas = std::slice::from_raw_parts(thetas, n_thetas);
        let result = stationarity_experiment(grid_n, spacing, thetas).map_err(lib_err)?;
        let out = std::slice::from_raw_parts_mut(rows, n_thetas);
        for (o, r) in out.iter_mut().zip(result) {
            *o = LmSpreadRow {
                theta: r.theta,
                world_spread: r.world_spread,
                local_spread: r.local_spread,
                closed_form: r.closed_form,
            };
        }
        Ok(())
    })
}
