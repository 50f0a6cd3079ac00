//! C ABI for isomatch.
//!
//! Every fallible function returns an [`ImStatus`]; on failure the message is
//! available from [`im_last_error_message`] on the same thread until the next
//! call. Clouds are opaque handles released with [`im_cloud_free`]. Matrices
//! are dense row-major `f64` buffers owned by the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use isomatch::geometry::{Point, PointCloud};
use isomatch::nalgebra::DMatrix;
use isomatch::ot::{partial_ot_dykstra, sinkhorn, Marginals, SolverConfig};
use isomatch::pipeline::{register, PipelineConfig};
use isomatch::synth::local_descriptor;
use isomatch::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Kernel underflow or a degenerate fit.
    Numerical = 3,
    /// Registration found no usable correspondences or hypotheses.
    RegistrationFailed = 4,
    Io = 5,
    Panic = 6,
}

/// Opaque point cloud.
pub struct ImCloud {
    inner: PointCloud,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ImRegisterOptions {
    pub seed: u64,
    pub super_points: usize,
    pub mass: f64,
    pub epsilon: f64,
    /// Nonzero weights sampling confidences by the estimated overlap.
    pub overlap_filter: u8,
    pub n_samples: usize,
    pub temperature: f64,
    pub inlier_thresh: f64,
    pub ransac_iters: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ImRegistration {
    /// Row-major rotation then translation.
    pub transform: [f64; 12],
    pub n_correspondences: usize,
    pub n_inliers: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ImStatus {
    match e {
        Error::KernelUnderflow | Error::DegenerateFit => ImStatus::Numerical,
        Error::NoConfidentCorrespondences | Error::NoValidHypothesis => ImStatus::RegistrationFailed,
        Error::Io(_) | Error::Json(_) | Error::Parse { .. } => ImStatus::Io,
        _ => ImStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ImStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ImStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            ImStatus::NullPointer
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            ImStatus::Panic
        }
    }
}

fn invalid(msg: &str) -> Fail {
    Fail::Core(Error::InvalidArgument(msg.into()))
}

/// # Safety
/// `data` must be null or valid for `len` reads.
unsafe fn input<'a>(data: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(data, len))
}

/// # Safety
/// `data` must be null or valid for `len` writes.
unsafe fn output<'a>(data: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if data.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts_mut(data, len))
}

unsafe fn cloud_ref<'a>(c: *const ImCloud, what: &'static str) -> Result<&'a PointCloud, Fail> {
    c.as_ref().map(|c| &c.inner).ok_or(Fail::Null(what))
}

fn row_major(data: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

fn checked_len(rows: usize, cols: usize) -> Result<usize, Fail> {
    rows.checked_mul(cols).ok_or_else(|| invalid("matrix size overflows"))
}

fn write_row_major(m: &DMatrix<f64>, out: &mut [f64]) {
    for (i, row) in m.row_iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[i * m.ncols() + j] = *v;
        }
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn im_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, NUL-terminated library version.
#[no_mangle]
pub extern "C" fn im_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a cloud from `n` points given as `3n` xyz values.
///
/// # Safety
/// `xyz` must be valid for `3n` reads and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn im_cloud_new(xyz: *const f64, n: usize, out: *mut *mut ImCloud) -> ImStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let data = input(xyz, checked_len(n, 3)?, "xyz")?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        let points = data.chunks_exact(3).map(|c| Point::new(c[0], c[1], c[2])).collect();
        *out = Box::into_raw(Box::new(ImCloud { inner: PointCloud::new(points) }));
        Ok(())
    })
}

/// # Safety
/// `cloud` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn im_cloud_free(cloud: *mut ImCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Number of points, or 0 for a null handle.
///
/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn im_cloud_len(cloud: *const ImCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.inner.len())
}

/// Attaches row-major features, one row of `dim` values per point.
///
/// # Safety
/// `cloud` must be a live handle and `features` valid for `im_cloud_len(cloud) * dim` reads.
#[no_mangle]
pub unsafe extern "C" fn im_cloud_set_features(cloud: *mut ImCloud, features: *const f64, dim: usize) -> ImStatus {
    guard(|| {
        let c = cloud.as_mut().ok_or(Fail::Null("cloud"))?;
        let n = c.inner.len();
        let data = input(features, checked_len(n, dim)?, "features")?;
        c.inner.set_features(row_major(data, n, dim))?;
        Ok(())
    })
}

/// Computes rigid-invariant local descriptors of dimension `dim` in place.
///
/// # Safety
/// `cloud` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn im_cloud_compute_descriptors(cloud: *mut ImCloud, radius: f64, dim: usize, seed: u64) -> ImStatus {
    guard(|| {
        let c = cloud.as_mut().ok_or(Fail::Null("cloud"))?;
        c.inner = local_descriptor(&c.inner, radius, dim, seed)?;
        Ok(())
    })
}

/// Default registration options.
#[no_mangle]
pub extern "C" fn im_register_options_default() -> ImRegisterOptions {
    let d = PipelineConfig::default();
    ImRegisterOptions {
        seed: d.seed,
        super_points: d.super_points,
        mass: d.mass,
        epsilon: d.solver.epsilon,
        overlap_filter: d.overlap_filter as u8,
        n_samples: d.n_samples,
        temperature: d.sampling.temperature,
        inlier_thresh: d.inlier_thresh,
        ransac_iters: d.ransac_iters,
    }
}

/// Estimates the rigid transform mapping `p` onto `q`. Both clouds need features.
///
/// # Safety
/// `p` and `q` must be live handles; `options` may be null for defaults;
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn im_register(
    p: *const ImCloud,
    q: *const ImCloud,
    options: *const ImRegisterOptions,
    out: *mut ImRegistration,
) -> ImStatus {
    guard(|| {
        let (p, q) = (cloud_ref(p, "p")?, cloud_ref(q, "q")?);
        let out = out.as_mut().ok_or(Fail::Null("out"))?;
        let o = options.as_ref().copied().unwrap_or_else(|| im_register_options_default());
        let mut cfg = PipelineConfig {
            super_points: o.super_points,
            mass: o.mass,
            overlap_filter: o.overlap_filter != 0,
            n_samples: o.n_samples,
            inlier_thresh: o.inlier_thresh,
            ransac_iters: o.ransac_iters,
            seed: o.seed,
            ..PipelineConfig::default()
        };
        cfg.solver.epsilon = o.epsilon;
        cfg.solver.seed = o.seed;
        cfg.sampling.temperature = o.temperature;
        cfg.solver.validate()?;
        let r = register(p, q, &cfg)?;
        *out = ImRegistration {
            transform: r.transform.to_array(),
            n_correspondences: r.correspondences.len(),
            n_inliers: r.inlier_count(),
        };
        Ok(())
    })
}

fn solver_config(epsilon: f64, max_iters: usize, tol: f64) -> Result<SolverConfig, Fail> {
    let cfg = SolverConfig { epsilon, outer_iters: max_iters, tol, ..SolverConfig::default() };
    cfg.validate()?;
    Ok(cfg)
}

/// Balanced entropic OT with uniform marginals. `cost` and `plan` are
/// row-major `n x m`.
///
/// # Safety
/// `cost` must be valid for `n * m` reads and `plan` for `n * m` writes.
#[no_mangle]
pub unsafe extern "C" fn im_sinkhorn(
    cost: *const f64,
    n: usize,
    m: usize,
    epsilon: f64,
    max_iters: usize,
    tol: f64,
    plan: *mut f64,
) -> ImStatus {
    guard(|| {
        let len = checked_len(n, m)?;
        let c = row_major(input(cost, len, "cost")?, n, m);
        let out = output(plan, len, "plan")?;
        let t = sinkhorn(&c, &Marginals::uniform(n, m)?, &solver_config(epsilon, max_iters, tol)?)?;
        write_row_major(&t.gamma, out);
        Ok(())
    })
}

/// Partial entropic OT moving `mass` in (0, 1] under uniform marginals.
///
/// # Safety
/// As for [`im_sinkhorn`].
#[no_mangle]
pub unsafe extern "C" fn im_partial_ot(
    cost: *const f64,
    n: usize,
    m: usize,
    mass: f64,
    epsilon: f64,
    max_iters: usize,
    tol: f64,
    plan: *mut f64,
) -> ImStatus {
    guard(|| {
        let len = checked_len(n, m)?;
        let c = row_major(input(cost, len, "cost")?, n, m);
        let out = output(plan, len, "plan")?;
        let t = partial_ot_dykstra(&c, &Marginals::uniform_partial(n, m, mass)?, &solver_config(epsilon, max_iters, tol)?)?;
        write_row_major(&t.gamma, out);
        Ok(())
    })
}
