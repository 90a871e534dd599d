//! C ABI over the kernel, ridge-regression and two-layer network routines.
//!
//! Every fallible function returns a [`BlStatus`]. On failure the message
//! is kept per thread and can be read with [`bl_last_error_message`].
//! Matrices cross the boundary as row-major `n * d` buffers of doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use benign_lab::krr::{krr_fit, krr_predict, KrrModel};
use benign_lab::ntk;
use benign_lab::relu_net::{forward, gd_step, init_antisymmetric, TwoLayerNet};
use benign_lab::sphere::UnitMatrix;
use benign_lab::Error;
use nalgebra::DMatrix;

/// Result codes. Values 1 to 4 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlStatus {
    Ok = 0,
    CheckFailed = 1,
    InvalidArgument = 2,
    Io = 3,
    Numeric = 4,
    NullPointer = 5,
    Panic = 6,
}

/// Opaque fitted kernel ridge regression model.
pub struct BlKrrModel(KrrModel);

/// Opaque two-layer ReLU network.
pub struct BlNet(TwoLayerNet);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BlStatus {
    match e.exit_code() {
        1 => BlStatus::CheckFailed,
        3 => BlStatus::Io,
        4 => BlStatus::Numeric,
        _ => BlStatus::InvalidArgument,
    }
}

enum Fail {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            BlStatus::Ok
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(name))) => {
            set_error(format!("null pointer: {name}"));
            BlStatus::NullPointer
        }
        Err(_) => {
            set_error("internal panic".into());
            BlStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize, name: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, name: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn out_ref<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(name))
}

fn matrix(data: &[f64], n: usize, d: usize) -> Result<DMatrix<f64>, Fail> {
    if n.checked_mul(d) != Some(data.len()) {
        return Err(Error::invalid("buffer length does not match n * d").into());
    }
    Ok(DMatrix::from_row_slice(n, d, data))
}

fn len(n: usize, d: usize) -> Result<usize, Fail> {
    n.checked_mul(d)
        .ok_or_else(|| Error::invalid("n * d overflows").into())
}

/// Message for the most recent failure on this thread, or null after a
/// success. The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn bl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Scalar profile `kappa(t)` for `t` in [-1, 1]; NaN outside.
#[no_mangle]
pub extern "C" fn bl_kappa(t: f64) -> f64 {
    if (-1.0..=1.0).contains(&t) {
        ntk::kappa(t)
    } else {
        f64::NAN
    }
}

/// Kernel value between two unit vectors of length `d`.
///
/// # Safety
/// `x` and `xp` must point to `d` doubles and `out` to one double.
#[no_mangle]
pub unsafe extern "C" fn bl_ntk_eval(
    x: *const f64,
    xp: *const f64,
    d: usize,
    out: *mut f64,
) -> BlStatus {
    guard(|| {
        let v = ntk::ntk_eval(input(x, d, "x")?, input(xp, d, "xp")?)?;
        *out_ref(out, "out")? = v;
        Ok(())
    })
}

/// Eigenvalue of order `h` on the sphere in dimension `d`.
///
/// # Safety
/// `out` must point to one double.
#[no_mangle]
pub unsafe extern "C" fn bl_eigenvalue(d: usize, h: usize, tol: f64, out: *mut f64) -> BlStatus {
    guard(|| {
        let v = ntk::eigenvalue(d, h, tol)?;
        *out_ref(out, "out")? = v;
        Ok(())
    })
}

/// Dimension of the degree-`h` spherical harmonics in dimension `d`.
///
/// # Safety
/// `out` must point to one `uint64_t`.
#[no_mangle]
pub unsafe extern "C" fn bl_multiplicity(d: usize, h: usize, out: *mut u64) -> BlStatus {
    guard(|| {
        let v = ntk::multiplicity(d, h)?;
        *out_ref(out, "out")? = v;
        Ok(())
    })
}

/// Eigenvalues and multiplicities for orders `0..=max_h`.
///
/// # Safety
/// `eigenvalues` and `multiplicities` must each hold `max_h + 1` entries.
#[no_mangle]
pub unsafe extern "C" fn bl_spectrum(
    d: usize,
    max_h: usize,
    tol: f64,
    eigenvalues: *mut f64,
    multiplicities: *mut u64,
) -> BlStatus {
    guard(|| {
        let k = max_h
            .checked_add(1)
            .ok_or_else(|| Error::invalid("max_h too large"))?;
        let entries = ntk::spectrum(d, max_h, tol)?;
        let ev = output(eigenvalues, k, "eigenvalues")?;
        let mu = output(multiplicities, k, "multiplicities")?;
        for (i, e) in entries.iter().enumerate() {
            ev[i] = e.eigenvalue;
            mu[i] = e.multiplicity;
        }
        Ok(())
    })
}

/// Fits kernel ridge regression on `n` unit-norm rows of length `d`.
///
/// # Safety
/// `x` must hold `n * d` doubles, `y` must hold `n`, and `out` must be a
/// valid location for the handle. Release the handle with [`bl_krr_free`].
#[no_mangle]
pub unsafe extern "C" fn bl_krr_fit(
    x: *const f64,
    n: usize,
    d: usize,
    y: *const f64,
    gamma: f64,
    out: *mut *mut BlKrrModel,
) -> BlStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        *slot = ptr::null_mut();
        let xs = UnitMatrix::new(matrix(input(x, len(n, d)?, "x")?, n, d)?)?;
        let model = krr_fit(&xs, input(y, n, "y")?, gamma)?;
        *slot = Box::into_raw(Box::new(BlKrrModel(model)));
        Ok(())
    })
}

/// Predictions at `n` unit-norm rows of length `d`.
///
/// # Safety
/// `model` must come from [`bl_krr_fit`], `x` must hold `n * d` doubles and
/// `out` must hold `n`.
#[no_mangle]
pub unsafe extern "C" fn bl_krr_predict(
    model: *const BlKrrModel,
    x: *const f64,
    n: usize,
    d: usize,
    out: *mut f64,
) -> BlStatus {
    guard(|| {
        let model = model.as_ref().ok_or(Fail::Null("model"))?;
        let xs = UnitMatrix::new(matrix(input(x, len(n, d)?, "x")?, n, d)?)?;
        let preds = krr_predict(&model.0, &xs)?;
        output(out, n, "out")?.copy_from_slice(&preds);
        Ok(())
    })
}

/// Number of training points held by the model, or 0 for null.
///
/// # Safety
/// `model` must be null or come from [`bl_krr_fit`].
#[no_mangle]
pub unsafe extern "C" fn bl_krr_num_train(model: *const BlKrrModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.dual_coeffs.len())
}

/// # Safety
/// `model` must be null or come from [`bl_krr_fit`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn bl_krr_free(model: *mut BlKrrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Antisymmetrically initialized network of even width `m` on inputs of
/// length `d`. Its output is identically zero.
///
/// # Safety
/// `out` must be a valid location for the handle. Release it with
/// [`bl_net_free`].
#[no_mangle]
pub unsafe extern "C" fn bl_net_init(
    m: usize,
    d: usize,
    seed: u64,
    out: *mut *mut BlNet,
) -> BlStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        *slot = ptr::null_mut();
        let (net, _) = init_antisymmetric(m, d, seed)?;
        *slot = Box::into_raw(Box::new(BlNet(net)));
        Ok(())
    })
}

/// Network outputs at `n` rows of length `d`.
///
/// # Safety
/// `net` must come from [`bl_net_init`], `x` must hold `n * d` doubles and
/// `out` must hold `n`.
#[no_mangle]
pub unsafe extern "C" fn bl_net_forward(
    net: *const BlNet,
    x: *const f64,
    n: usize,
    d: usize,
    out: *mut f64,
) -> BlStatus {
    guard(|| {
        let net = net.as_ref().ok_or(Fail::Null("net"))?;
        let preds = forward(&net.0, &matrix(input(x, len(n, d)?, "x")?, n, d)?)?;
        output(out, n, "out")?.copy_from_slice(&preds);
        Ok(())
    })
}

/// One full-batch gradient step on the squared loss. The network is left
/// unchanged on failure.
///
/// # Safety
/// `net` must come from [`bl_net_init`], `x` must hold `n * d` doubles and
/// `y` must hold `n`.
#[no_mangle]
pub unsafe extern "C" fn bl_net_step(
    net: *mut BlNet,
    x: *const f64,
    y: *const f64,
    n: usize,
    d: usize,
    lr: f64,
) -> BlStatus {
    guard(|| {
        let net = net.as_mut().ok_or(Fail::Null("net"))?;
        let xs = matrix(input(x, len(n, d)?, "x")?, n, d)?;
        net.0 = gd_step(net.0.clone(), &xs, input(y, n, "y")?, lr)?;
        Ok(())
    })
}

/// Hidden width, or 0 for null.
///
/// # Safety
/// `net` must be null or come from [`bl_net_init`].
#[no_mangle]
pub unsafe extern "C" fn bl_net_width(net: *const BlNet) -> usize {
    net.as_ref().map_or(0, |n| n.0.width())
}

/// Input dimension, or 0 for null.
///
/// # Safety
/// `net` must be null or come from [`bl_net_init`].
#[no_mangle]
pub unsafe extern "C" fn bl_net_dim(net: *const BlNet) -> usize {
    net.as_ref().map_or(0, |n| n.0.dim())
}

/// # Safety
/// `net` must be null or come from [`bl_net_init`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn bl_net_free(net: *mut BlNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}
