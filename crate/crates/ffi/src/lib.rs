//! C ABI over the core library.
//!
//! Objects cross the boundary as opaque heap handles (`am_*_new` /
//! `am_*_free`). Every fallible call returns an [`AmStatus`]; on failure a
//! message is kept per thread and read back with [`am_last_error`].
//! Panics are caught at the boundary and reported as `AM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use anderson_meso::hamiltonian::{sample_operator, DisorderedOperator, PotentialSpec};
use anderson_meso::lattice::LatticeBox;
use anderson_meso::spectral;
use anderson_meso::stats;
use anderson_meso::Error;
use num_complex::Complex64;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    BufferTooSmall = 4,
    Panic = 5,
}

/// Box of `Z^d` sites.
pub struct AmBox(LatticeBox);

/// One realization `H = Δ + V` on a box.
pub struct AmOperator(DisorderedOperator);

/// Sylvester inertia of `H - shift`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct AmInertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
    pub shift_used: f64,
    /// Non-zero when a singular pivot forced a nudged shift.
    pub jittered: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(AmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = if e.is_numerical() {
            AmStatus::Numerical
        } else {
            AmStatus::InvalidArgument
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(AmStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            AmStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            AmStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn am_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn am_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Box `[lower_k, upper_k]` along each of `dim` axes.
///
/// # Safety
/// `lower` and `upper` must point to `dim` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn am_box_new(lower: *const i64, upper: *const i64, dim: usize, out: *mut *mut AmBox) -> AmStatus {
    guard(|| {
        let lo = slice(lower, dim, "lower")?.to_vec();
        let hi = slice(upper, dim, "upper")?.to_vec();
        let b = LatticeBox::new(lo, hi)?;
        put(out, Box::into_raw(Box::new(AmBox(b))))
    })
}

/// Centered box `[-L, L]^dim`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn am_box_centered(half_width: i64, dim: usize, out: *mut *mut AmBox) -> AmStatus {
    guard(|| {
        let b = LatticeBox::centered(half_width, dim)?;
        put(out, Box::into_raw(Box::new(AmBox(b))))
    })
}

/// Number of sites, or 0 for a null handle.
///
/// # Safety
/// `b` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn am_box_site_count(b: *const AmBox) -> usize {
    b.as_ref().map_or(0, |b| b.0.site_count())
}

/// # Safety
/// `b` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn am_box_free(b: *mut AmBox) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

/// Sample `V` i.i.d. uniform on `[-W/2, W/2]`; the same `(box, seed)` always
/// gives the same potential.
///
/// # Safety
/// `b` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn am_operator_sample(b: *const AmBox, width: f64, seed: u64, out: *mut *mut AmOperator) -> AmStatus {
    guard(|| {
        let b = get(b, "box")?;
        let op = sample_operator(&b.0, &PotentialSpec::uniform(width)?, seed)?;
        put(out, Box::into_raw(Box::new(AmOperator(op))))
    })
}

/// Operator with an explicit potential in row-major site order.
///
/// # Safety
/// `potential` must point to `len` values; `b` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn am_operator_from_potential(
    b: *const AmBox,
    potential: *const f64,
    len: usize,
    out: *mut *mut AmOperator,
) -> AmStatus {
    guard(|| {
        let b = get(b, "box")?;
        let v = slice(potential, len, "potential")?.to_vec();
        let op = DisorderedOperator::from_potential(b.0.clone(), v)?;
        put(out, Box::into_raw(Box::new(AmOperator(op))))
    })
}

/// # Safety
/// `op` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn am_operator_site_count(op: *const AmOperator) -> usize {
    op.as_ref().map_or(0, |o| o.0.site_count())
}

/// # Safety
/// `op` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn am_operator_free(op: *mut AmOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Eigenvalues in the open interval `(lo, hi)`, by inertia.
///
/// # Safety
/// `op` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn am_count_in_interval(op: *const AmOperator, lo: f64, hi: f64, out: *mut usize) -> AmStatus {
    guard(|| put(out, spectral::count_in_interval(&get(op, "operator")?.0, lo, hi)?))
}

/// # Safety
/// `op` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn am_inertia(op: *const AmOperator, shift: f64, out: *mut AmInertia) -> AmStatus {
    guard(|| {
        let i = spectral::inertia_at(&get(op, "operator")?.0, shift)?;
        put(
            out,
            AmInertia {
                negative: i.negative,
                zero: i.zero,
                positive: i.positive,
                shift_used: i.shift_used,
                jittered: i.jittered as u8,
            },
        )
    })
}

/// `G(x, y; z)` for site indices `x`, `y`; `Im z` must be non-zero.
///
/// # Safety
/// `op` must be a live handle; `re` and `im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn am_greens_entry(
    op: *const AmOperator,
    x: usize,
    y: usize,
    z_re: f64,
    z_im: f64,
    re: *mut f64,
    im: *mut f64,
) -> AmStatus {
    guard(|| {
        let op = get(op, "operator")?;
        if y >= op.0.site_count() {
            return Err(Fail(AmStatus::InvalidArgument, format!("site index {y} outside box")));
        }
        let g = spectral::greens_entry(&op.0, x, y, Complex64::new(z_re, z_im))?;
        put(re, g.re)?;
        put(im, g.im)
    })
}

/// `Tr Im (H - z)^{-1}`.
///
/// # Safety
/// `op` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn am_trace_im_resolvent(op: *const AmOperator, z_re: f64, z_im: f64, out: *mut f64) -> AmStatus {
    guard(|| put(out, spectral::trace_im_resolvent(&get(op, "operator")?.0, Complex64::new(z_re, z_im))?))
}

/// Full ascending spectrum into `buf`. `written` receives the number of
/// eigenvalues; when `cap` is too small nothing else is written and the
/// call returns `AM_STATUS_BUFFER_TOO_SMALL`.
///
/// # Safety
/// `buf` must have room for `cap` values; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn am_dense_spectrum(op: *const AmOperator, buf: *mut f64, cap: usize, written: *mut usize) -> AmStatus {
    guard(|| {
        let op = get(op, "operator")?;
        let n = op.0.site_count();
        put(written, n)?;
        if cap < n {
            return Err(Fail(AmStatus::BufferTooSmall, format!("need {n} slots, got {cap}")));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        let ev = spectral::dense_spectrum(&op.0)?;
        std::slice::from_raw_parts_mut(buf, n).copy_from_slice(&ev);
        Ok(())
    })
}

/// Smoothed indicator of `[a, b]` at `x` with Cauchy width `eps`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn am_mollifier(x: f64, eps: f64, a: f64, b: f64, out: *mut f64) -> AmStatus {
    guard(|| put(out, stats::mollifier_eval(x, eps, a, b)?))
}

/// Poisson probability `P(N = n)` for mean `lambda`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn am_poisson_pmf(lambda: f64, n: u64, out: *mut f64) -> AmStatus {
    guard(|| put(out, stats::poisson_pmf(lambda, n)?))
}
