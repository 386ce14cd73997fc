//! C ABI over `dka-core`.
//!
//! Every fallible function returns a [`DkaStatus`]; on failure the message
//! is available from [`dka_last_error`] on the same thread. Objects are
//! opaque handles created by `*_new`/`*_compute` and released by `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use dka_core::classical::{find_accel_orbit, KickedMap, OrbitSearch, PhasePoint};
use dka_core::floquet::{build_block, diagonalize, kick_coefficient, BlochState, Spectrum};
use dka_core::params::{derive_params, ResonanceInput, SystemParams};
use dka_core::phasespace::{husimi_map, GridSpec};
use dka_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DkaStatus {
    Ok = 0,
    /// Null pointer, bad length or other misuse of the API.
    InvalidArgument = 1,
    /// Resonance parameters failed validation.
    Validation = 2,
    /// A numerical tolerance check failed.
    Tolerance = 3,
    /// Eigensolver or orbit search did not converge.
    Convergence = 4,
    /// Index past the end of a collection.
    OutOfRange = 5,
    /// Internal panic caught at the boundary.
    Panic = 6,
}

/// Which kicked map to use.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DkaMap {
    Classical = 0,
    Epsilon = 1,
}

/// Opaque validated parameter set.
pub struct DkaParams(SystemParams);

/// Opaque diagonalized Floquet block.
pub struct DkaSpectrum {
    params: SystemParams,
    spectrum: Spectrum,
}

/// Derived quantities of a parameter set, in units `ħ = m = G = 1`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct DkaDerived {
    pub period: f64,
    pub omega: f64,
    pub stochasticity: f64,
    pub epsilon: f64,
    pub gravity: f64,
    pub beta: f64,
    pub gravity_drop: f64,
    pub ladder_step: f64,
    pub squeeze: f64,
    pub block_dim: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: DkaStatus, msg: impl Into<String>) -> DkaStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> DkaStatus {
    let status = match &e {
        Error::Validation(_) => DkaStatus::Validation,
        Error::Tolerance { .. } => DkaStatus::Tolerance,
        Error::Eigen(_) | Error::Orbit(_) | Error::NoPersistentPeak { .. } => DkaStatus::Convergence,
        Error::OutOfRange { .. } => DkaStatus::OutOfRange,
        _ => DkaStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> DkaStatus) -> DkaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(DkaStatus::Panic, "internal panic"),
    }
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dka_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Validates and derives a parameter set.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn dka_params_new(
    m: u64,
    n: u64,
    r: u64,
    s: u64,
    l: i64,
    k: f64,
    theta0: f64,
    out: *mut *mut DkaParams,
) -> DkaStatus {
    guard(|| {
        if out.is_null() {
            return fail(DkaStatus::InvalidArgument, "out is null");
        }
        let input = ResonanceInput::new(m, n, r, s, l, k).with_theta0(theta0);
        match derive_params(&input) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(DkaParams(p)));
                DkaStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `params` must be null or a handle from [`dka_params_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dka_params_free(params: *mut DkaParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// # Safety
/// `params` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dka_params_derived(params: *const DkaParams, out: *mut DkaDerived) -> DkaStatus {
    guard(|| {
        let (Some(p), false) = (params.as_ref(), out.is_null()) else {
            return fail(DkaStatus::InvalidArgument, "null argument");
        };
        let p = &p.0;
        *out = DkaDerived {
            period: p.period,
            omega: p.omega,
            stochasticity: p.stochasticity,
            epsilon: p.epsilon,
            gravity: p.gravity,
            beta: p.beta,
            gravity_drop: p.gravity_drop,
            ladder_step: p.ladder_step,
            squeeze: p.squeeze,
            block_dim: p.block_dim,
        };
        DkaStatus::Ok
    })
}

/// Builds and diagonalizes the Floquet block at the parameter set's Bloch
/// angle.
///
/// # Safety
/// `params` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dka_spectrum_compute(params: *const DkaParams, out: *mut *mut DkaSpectrum) -> DkaStatus {
    guard(|| {
        let (Some(p), false) = (params.as_ref(), out.is_null()) else {
            return fail(DkaStatus::InvalidArgument, "null argument");
        };
        let p = p.0;
        let result = build_block(&p, p.input.theta0).and_then(|b| diagonalize(&b));
        match result {
            Ok(spectrum) => {
                *out = Box::into_raw(Box::new(DkaSpectrum { params: p, spectrum }));
                DkaStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `spectrum` must be null or a handle from [`dka_spectrum_compute`].
#[no_mangle]
pub unsafe extern "C" fn dka_spectrum_free(spectrum: *mut DkaSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

/// Number of eigenpairs; 0 for a null handle.
///
/// # Safety
/// `spectrum` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dka_spectrum_len(spectrum: *const DkaSpectrum) -> usize {
    spectrum.as_ref().map_or(0, |s| s.spectrum.len())
}

/// Eigenvalue, quasi-energy and residual of eigenpair `index`. Any output
/// pointer may be null.
///
/// # Safety
/// `spectrum` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn dka_spectrum_eigenpair(
    spectrum: *const DkaSpectrum,
    index: usize,
    eigenvalue_re: *mut f64,
    eigenvalue_im: *mut f64,
    quasi_energy: *mut f64,
    residual: *mut f64,
) -> DkaStatus {
    guard(|| {
        let Some(s) = spectrum.as_ref() else {
            return fail(DkaStatus::InvalidArgument, "null spectrum");
        };
        let st = match s.spectrum.state(index) {
            Ok(st) => st,
            Err(e) => return from_error(e),
        };
        for (ptr, v) in [
            (eigenvalue_re, st.eigenvalue.re),
            (eigenvalue_im, st.eigenvalue.im),
            (quasi_energy, st.quasi_energy),
            (residual, st.residual),
        ] {
            if !ptr.is_null() {
                *ptr = v;
            }
        }
        DkaStatus::Ok
    })
}

/// Copies eigenvector `index` as interleaved `re, im` pairs into `out`,
/// which must hold `2 × block_dim` doubles.
///
/// # Safety
/// `spectrum` must be a live handle and `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dka_spectrum_vector(
    spectrum: *const DkaSpectrum,
    index: usize,
    out: *mut f64,
    len: usize,
) -> DkaStatus {
    guard(|| {
        let (Some(s), false) = (spectrum.as_ref(), out.is_null()) else {
            return fail(DkaStatus::InvalidArgument, "null argument");
        };
        let st = match s.spectrum.state(index) {
            Ok(st) => st,
            Err(e) => return from_error(e),
        };
        let need = 2 * st.block_vector.len();
        if len < need {
            return fail(DkaStatus::InvalidArgument, format!("buffer holds {len} doubles, need {need}"));
        }
        let dst = std::slice::from_raw_parts_mut(out, need);
        for (pair, a) in dst.chunks_exact_mut(2).zip(&st.block_vector) {
            pair[0] = a.re;
            pair[1] = a.im;
        }
        DkaStatus::Ok
    })
}

/// Husimi function of eigenstate `index` on an `nz × np` grid over the
/// whole quantum cell, row-major with one row per momentum.
///
/// # Safety
/// `spectrum` must be a live handle and `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dka_husimi(
    spectrum: *const DkaSpectrum,
    index: usize,
    nz: usize,
    np: usize,
    out: *mut f64,
    len: usize,
) -> DkaStatus {
    guard(|| {
        let (Some(s), false) = (spectrum.as_ref(), out.is_null()) else {
            return fail(DkaStatus::InvalidArgument, "null argument");
        };
        if nz == 0 || np == 0 || len < nz * np {
            return fail(DkaStatus::InvalidArgument, "grid is empty or buffer too small");
        }
        let st = match s.spectrum.state(index) {
            Ok(st) => st,
            Err(e) => return from_error(e),
        };
        let spec = GridSpec { nz, np, ..GridSpec::cell(&s.params, 1) };
        let grid = husimi_map(&BlochState::new(st, &s.params, s.spectrum.theta0), &spec, &s.params);
        std::slice::from_raw_parts_mut(out, nz * np).copy_from_slice(&grid.values);
        DkaStatus::Ok
    })
}

/// One-kick momentum transfer amplitude `iⁿ J_n(k)`.
///
/// # Safety
/// `re` and `im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dka_kick_coefficient(n: i64, k: f64, re: *mut f64, im: *mut f64) -> DkaStatus {
    guard(|| {
        if re.is_null() || im.is_null() {
            return fail(DkaStatus::InvalidArgument, "null argument");
        }
        let c = kick_coefficient(n, k);
        *re = c.re;
        *im = c.im;
        DkaStatus::Ok
    })
}

fn make_map(kind: DkaMap, kick: f64, omega: f64, sign: f64) -> KickedMap {
    match kind {
        DkaMap::Classical => KickedMap::Classical { stochasticity: kick, omega },
        DkaMap::Epsilon => KickedMap::Epsilon {
            k_eps: kick,
            omega,
            sign: if sign < 0.0 { -1.0 } else { 1.0 },
        },
    }
}

/// One step of the chosen map, in place on `(theta, action)`. `sign` is
/// `sgn ε` and ignored for the classical map.
///
/// # Safety
/// `theta` and `action` must be valid read-write pointers.
#[no_mangle]
pub unsafe extern "C" fn dka_map_step(
    kind: DkaMap,
    kick: f64,
    omega: f64,
    sign: f64,
    theta: *mut f64,
    action: *mut f64,
) -> DkaStatus {
    guard(|| {
        if theta.is_null() || action.is_null() {
            return fail(DkaStatus::InvalidArgument, "null argument");
        }
        let p = make_map(kind, kick, omega, sign).step(PhasePoint::new(*theta, *action));
        *theta = p.theta;
        *action = p.action;
        DkaStatus::Ok
    })
}

/// Most stable accelerator-mode orbit of order `order` and jump `jump`.
/// `theta` and `action` receive `order` values each.
///
/// # Safety
/// `theta` and `action` must be valid for `order` doubles; `trace` and
/// `stable` may be null.
#[no_mangle]
pub unsafe extern "C" fn dka_find_orbit(
    kind: DkaMap,
    kick: f64,
    omega: f64,
    sign: f64,
    order: usize,
    jump: i64,
    theta: *mut f64,
    action: *mut f64,
    trace: *mut f64,
    stable: *mut bool,
) -> DkaStatus {
    guard(|| {
        if theta.is_null() || action.is_null() {
            return fail(DkaStatus::InvalidArgument, "null argument");
        }
        let map = make_map(kind, kick, omega, sign);
        match find_accel_orbit(order, jump, &map, &OrbitSearch::default()) {
            Ok(o) => {
                let t = std::slice::from_raw_parts_mut(theta, order);
                let a = std::slice::from_raw_parts_mut(action, order);
                for (i, p) in o.points.iter().enumerate() {
                    t[i] = p.theta;
                    a[i] = p.action;
                }
                if !trace.is_null() {
                    *trace = o.monodromy_trace;
                }
                if !stable.is_null() {
                    *stable = o.stable;
                }
                DkaStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}
